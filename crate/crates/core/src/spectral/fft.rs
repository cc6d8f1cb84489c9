//! Unnormalised 3D complex DFT over an `h^3` cube stored row-major
//! (last axis fastest) in FFT index order.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

pub(crate) fn fft3(data: &mut [Complex64], h: usize, direction: FftDirection) {
    assert_eq!(data.len(), h * h * h);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft(h, direction);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];

    // last axis: contiguous rows
    fft.process_with_scratch(data, &mut scratch);

    let mut line = vec![Complex64::default(); h];
    // middle axis
    for a in 0..h {
        for c in 0..h {
            for b in 0..h {
                line[b] = data[(a * h + b) * h + c];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for b in 0..h {
                data[(a * h + b) * h + c] = line[b];
            }
        }
    }
    // first axis
    for b in 0..h {
        for c in 0..h {
            for a in 0..h {
                line[a] = data[(a * h + b) * h + c];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for a in 0..h {
                data[(a * h + b) * h + c] = line[a];
            }
        }
    }
}
