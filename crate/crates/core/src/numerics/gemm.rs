//! Thin safe wrappers over `matrixmultiply::dgemm` for row-major buffers.
//!
//! Every wrapper computes `c = a' * b' + beta * c` where the primes denote the
//! (optionally transposed) views named in the function.

#[inline]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the assertions above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m,n] (+)= a[m,k] · b[k,n]`
pub(crate) fn nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], acc: bool) {
    dgemm(m, k, n, a, (k, 1), b, (n, 1), if acc { 1.0 } else { 0.0 }, c);
}

/// `c[m,n] (+)= a[m,k] · b[n,k]ᵀ`
pub(crate) fn nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], acc: bool) {
    dgemm(m, k, n, a, (k, 1), b, (1, k), if acc { 1.0 } else { 0.0 }, c);
}

/// `c[m,n] (+)= a[k,m]ᵀ · b[k,n]`
pub(crate) fn tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], acc: bool) {
    dgemm(m, k, n, a, (1, m), b, (n, 1), if acc { 1.0 } else { 0.0 }, c);
}
