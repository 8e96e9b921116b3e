//! Plain loops with a fixed accumulation order.

use super::Real;

/// `out += a[n×k] · b[k×m]`
pub(crate) fn matmul_acc<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a[n×k] · b[m×k]ᵀ`
pub(crate) fn matmul_bt_acc<T: Real>(a: &[T], b: &[T], n: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..m {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * m + j] += s;
        }
    }
}

/// `out += a[n×k]ᵀ · c[n×m]`, giving `k×m`.
pub(crate) fn matmul_at_acc<T: Real>(a: &[T], c: &[T], n: usize, k: usize, m: usize, out: &mut [T]) {
    for i in 0..n {
        let crow = &c[i * m..(i + 1) * m];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &cv) in orow.iter_mut().zip(crow) {
                *o += av * cv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_kernels_agree_with_hand_results() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut out = [0.0; 4];
        matmul_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
        let mut out = [0.0; 4];
        matmul_bt_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [17.0, 23.0, 39.0, 53.0]);
        let mut out = [0.0; 4];
        matmul_at_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [26.0, 30.0, 38.0, 44.0]);
    }
}
