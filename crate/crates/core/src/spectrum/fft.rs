//! 2-D FFT and the zero-frequency shift pair.

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

fn fft_axis(data: &mut Array2<Complex64>, axis: Axis, direction: FftDirection, planner: &mut FftPlanner<f64>) {
    let n = data.len_of(axis);
    let fft = planner.plan_fft(n, direction);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for mut lane in data.lanes_mut(axis) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = *b;
        }
    }
}

/// Unnormalized forward DFT.
pub fn fft2(image: ArrayView2<f64>) -> Array2<Complex64> {
    let mut data = image.mapv(|v| Complex64::new(v, 0.0));
    let mut planner = FftPlanner::new();
    fft_axis(&mut data, Axis(1), FftDirection::Forward, &mut planner);
    fft_axis(&mut data, Axis(0), FftDirection::Forward, &mut planner);
    data
}

/// Inverse DFT, scaled by `1/(H·W)` so that `ifft2(fft2(x)) == x`.
pub fn ifft2(spectrum: &Array2<Complex64>) -> Array2<Complex64> {
    let mut data = spectrum.clone();
    let mut planner = FftPlanner::new();
    fft_axis(&mut data, Axis(1), FftDirection::Inverse, &mut planner);
    fft_axis(&mut data, Axis(0), FftDirection::Inverse, &mut planner);
    let scale = 1.0 / data.len() as f64;
    data.mapv_inplace(|v| v * scale);
    data
}

/// Moves the zero frequency from index 0 to index `n/2` (integer division)
/// along both axes.
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(y, x)| a[[(y + h - h / 2) % h, (x + w - w / 2) % w]].clone())
}

/// Exact inverse of [`fftshift`] for every size.
pub fn ifftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (h, w) = a.dim();
    Array2::from_shape_fn((h, w), |(y, x)| a[[(y + h / 2) % h, (x + w / 2) % w]].clone())
}
