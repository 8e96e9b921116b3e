use std::fs;
use std::io::Write;
use std::path::Path;

use super::{parameter_layout, ClassifierError, EpochRecord, Model, ModelConfig, TrainedModel};
use crate::nn::Tensor;

pub const CHECKPOINT_VERSION: &str = "motionleak-checkpoint v1";

/// Writes a text header (version, config, parameter manifest) followed by
/// the little-endian f32 payload. The file is written to a sibling temp
/// path and renamed, so a crash never leaves a half-written checkpoint.
pub fn save_checkpoint(trained: &TrainedModel, path: &Path) -> Result<(), ClassifierError> {
    let model = &trained.model;
    let cfg = model.config();
    let mut header = String::new();
    header.push_str(CHECKPOINT_VERSION);
    header.push('\n');
    header.push_str(&format!("config {}\n", cfg.to_canonical_json()));
    header.push_str(&format!("config_sha256 {}\n", cfg.hash()));
    header.push_str(&format!("best_epoch {}\n", trained.best_epoch));
    header.push_str(&format!(
        "history {}\n",
        serde_json::to_string(&trained.history).expect("history serializes")
    ));
    let mut offset = 0usize;
    for ((name, shape), p) in parameter_layout(cfg).iter().zip(model.parameters()) {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("param {name} {} {offset} {}\n", dims.join("x"), p.len()));
        offset += p.len();
    }
    header.push_str(&format!("payload_f32 {offset}\nend\n"));

    let mut bytes = header.into_bytes();
    bytes.reserve(offset * 4);
    for p in model.parameters() {
        for v in p.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> ClassifierError {
    ClassifierError::CorruptPayload(msg.into())
}

/// Reads a checkpoint written by [`save_checkpoint`], verifying the version
/// line, the config hash and the payload length.
pub fn load_checkpoint(path: &Path) -> Result<TrainedModel, ClassifierError> {
    let bytes = fs::read(path)?;
    parse_checkpoint(&bytes)
}

/// Like [`load_checkpoint`], but also requires the stored config to equal
/// `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &ModelConfig) -> Result<TrainedModel, ClassifierError> {
    let trained = load_checkpoint(path)?;
    if trained.model.config() != expected {
        return Err(ClassifierError::VersionMismatch(format!(
            "checkpoint config {} differs from requested {}",
            trained.model.config().hash(),
            expected.hash()
        )));
    }
    Ok(trained)
}

fn parse_checkpoint(bytes: &[u8]) -> Result<TrainedModel, ClassifierError> {
    let mut pos = 0usize;
    let mut next_line = || -> Result<&str, ClassifierError> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("header ends before `end`"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| corrupt("header is not UTF-8"))
    };

    let version = next_line()?;
    if version != CHECKPOINT_VERSION {
        return Err(ClassifierError::VersionMismatch(format!(
            "expected `{CHECKPOINT_VERSION}`, found `{version}`"
        )));
    }
    let field = |line: &str, key: &str| -> Result<String, ClassifierError> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| corrupt(format!("expected `{key}` line")))
    };
    let config_json = field(next_line()?, "config")?;
    let config: ModelConfig = serde_json::from_str(&config_json)
        .map_err(|e| ClassifierError::VersionMismatch(format!("unreadable config: {e}")))?;
    let hash = field(next_line()?, "config_sha256")?;
    if hash != config.hash() {
        return Err(ClassifierError::VersionMismatch(
            "config hash does not match the stored config".into(),
        ));
    }
    let best_epoch: usize = field(next_line()?, "best_epoch")?
        .parse()
        .map_err(|_| corrupt("bad best_epoch"))?;
    let history: Vec<EpochRecord> = serde_json::from_str(&field(next_line()?, "history")?)
        .map_err(|e| corrupt(format!("bad history: {e}")))?;

    let layout = parameter_layout(&config);
    let mut manifest = Vec::with_capacity(layout.len());
    let total = loop {
        let line = next_line()?;
        if let Some(n) = line.strip_prefix("payload_f32 ") {
            break n.parse::<usize>().map_err(|_| corrupt("bad payload length"))?;
        }
        let body = field(line, "param")?;
        let cols: Vec<&str> = body.split(' ').collect();
        if cols.len() != 4 {
            return Err(corrupt(format!("bad param line `{line}`")));
        }
        let offset: usize = cols[2].parse().map_err(|_| corrupt("bad offset"))?;
        let len: usize = cols[3].parse().map_err(|_| corrupt("bad length"))?;
        manifest.push((cols[0].to_string(), cols[1].to_string(), offset, len));
    };
    if next_line()? != "end" {
        return Err(corrupt("missing `end` line"));
    }

    if manifest.len() != layout.len() {
        return Err(ClassifierError::VersionMismatch("parameter manifest does not match config".into()));
    }
    let payload = &bytes[pos..];
    if payload.len() != total * 4 {
        return Err(corrupt(format!(
            "payload has {} bytes, header declares {}",
            payload.len(),
            total * 4
        )));
    }
    let mut params = Vec::with_capacity(layout.len());
    let mut expected_offset = 0usize;
    for ((name, dims, offset, len), (lname, shape)) in manifest.iter().zip(&layout) {
        let ldims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        if name != lname || *dims != ldims.join("x") || *len != shape.iter().product::<usize>() {
            return Err(ClassifierError::VersionMismatch(format!("parameter `{name}` does not match layout")));
        }
        if *offset != expected_offset || offset + len > total {
            return Err(corrupt(format!("parameter `{name}` has a bad offset")));
        }
        expected_offset += len;
        let data: Vec<f32> = payload[offset * 4..(offset + len) * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(corrupt(format!("parameter `{name}` holds non-finite values")));
        }
        params.push(Tensor::new(shape, data)?);
    }
    if expected_offset != total {
        return Err(corrupt("payload length disagrees with the manifest"));
    }
    let model = Model::from_parameters(config, params)?;
    Ok(TrainedModel {
        model,
        best_epoch,
        history,
    })
}
