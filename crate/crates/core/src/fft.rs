//! Unitary, DC-centred 2-D Fourier transforms.
//!
//! Index `floor(n / 2)` is the origin in both image space and k-space, so
//! `fft2c(x) = fftshift(fft2(ifftshift(x))) / sqrt(ny * nx)`.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

fn transform(data: &mut [Complex64], ny: usize, nx: usize, direction: FftDirection) {
    assert_eq!(data.len(), ny * nx);
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(nx, direction);
    let col_fft = planner.plan_fft(ny, direction);

    // Rows: shift origin to index 0, transform, shift back.
    let mut buf = vec![Complex64::new(0.0, 0.0); nx.max(ny)];
    for row in data.chunks_exact_mut(nx) {
        ifftshift_into(row, &mut buf[..nx]);
        row_fft.process(&mut buf[..nx]);
        fftshift_into(&buf[..nx], row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); ny];
    for x in 0..nx {
        for y in 0..ny {
            col[y] = data[y * nx + x];
        }
        ifftshift_into(&col, &mut buf[..ny]);
        col_fft.process(&mut buf[..ny]);
        fftshift_into(&buf[..ny], &mut col);
        for y in 0..ny {
            data[y * nx + x] = col[y];
        }
    }
    let scale = 1.0 / ((ny * nx) as f64).sqrt();
    data.iter_mut().for_each(|z| *z *= scale);
}

// out[i] = inp[(i + n/2) mod n]: moves the centred origin to index 0.
fn ifftshift_into(inp: &[Complex64], out: &mut [Complex64]) {
    let n = inp.len();
    let h = n / 2;
    for i in 0..n {
        out[i] = inp[(i + h) % n];
    }
}

// out[(i + n/2) mod n] = inp[i]: moves index 0 to the centre.
fn fftshift_into(inp: &[Complex64], out: &mut [Complex64]) {
    let n = inp.len();
    let h = n / 2;
    for i in 0..n {
        out[(i + h) % n] = inp[i];
    }
}

/// Forward transform of one `ny × nx` plane in place (image → k-space).
pub fn fft2c(data: &mut [Complex64], ny: usize, nx: usize) {
    transform(data, ny, nx, FftDirection::Forward);
}

/// Inverse transform of one `ny × nx` plane in place (k-space → image).
pub fn ifft2c(data: &mut [Complex64], ny: usize, nx: usize) {
    transform(data, ny, nx, FftDirection::Inverse);
}

/// Applies [`fft2c`] to every plane of a channel-major buffer.
pub fn fft2c_planes(data: &mut [Complex64], ny: usize, nx: usize) {
    for plane in data.chunks_exact_mut(ny * nx) {
        fft2c(plane, ny, nx);
    }
}

/// Applies [`ifft2c`] to every plane of a channel-major buffer.
pub fn ifft2c_planes(data: &mut [Complex64], ny: usize, nx: usize) {
    for plane in data.chunks_exact_mut(ny * nx) {
        ifft2c(plane, ny, nx);
    }
}
