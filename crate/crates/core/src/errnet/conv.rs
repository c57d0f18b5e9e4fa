//! 3x3 same-padded convolution over a batch of equally sized planes.
//!
//! Activations are `[channels, batch * h * w]`. Work is split into fixed
//! row-blocks of single images, so results do not depend on the thread count.

use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

const CHUNK_ROWS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn columns(&self) -> usize {
        self.batch * self.pixels()
    }

    /// `(image, first row, end row)` blocks in a fixed order.
    fn chunks(&self) -> Vec<(usize, usize, usize)> {
        (0..self.batch)
            .flat_map(|b| {
                (0..self.height)
                    .step_by(CHUNK_ROWS)
                    .map(move |r0| (b, r0, (r0 + CHUNK_ROWS).min(self.height)))
            })
            .collect()
    }

    fn column_range(&self, b: usize, r0: usize, r1: usize) -> (usize, usize) {
        let base = b * self.pixels();
        (base + r0 * self.width, base + r1 * self.width)
    }
}

/// Patch matrix `[c * 9, (r1 - r0) * w]` for rows `r0..r1` of image `b`, zero padded.
fn im2col(x: &ArrayView2<f64>, g: Geometry, b: usize, r0: usize, r1: usize) -> Array2<f64> {
    let (h, w) = (g.height, g.width);
    let c = x.nrows();
    let n = (r1 - r0) * w;
    let base = b * g.pixels();
    let mut col = Array2::<f64>::zeros((c * 9, n));
    for ci in 0..c {
        let plane = x.row(ci);
        for ky in 0..3 {
            for kx in 0..3 {
                let mut dst = col.row_mut(ci * 9 + ky * 3 + kx);
                for (ri, y) in (r0..r1).enumerate() {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = base + sy as usize * w;
                    for x_ in 0..w {
                        let sx = x_ as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            dst[ri * w + x_] = plane[src_row + sx as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// `out[co] = sum_k weights[co, k] * patches[k] + bias[co]`.
pub(crate) fn forward(x: ArrayView2<f64>, weights: ArrayView2<f64>, bias: &[f64], g: Geometry) -> Array2<f64> {
    let cout = weights.nrows();
    let parts: Vec<Array2<f64>> = g
        .chunks()
        .into_par_iter()
        .map(|(b, r0, r1)| {
            let col = im2col(&x, g, b, r0, r1);
            weights.dot(&col)
        })
        .collect();
    let mut out = Array2::<f64>::zeros((cout, g.columns()));
    for ((b, r0, r1), part) in g.chunks().into_iter().zip(parts) {
        let (c0, c1) = g.column_range(b, r0, r1);
        out.slice_mut(s![.., c0..c1]).assign(&part);
    }
    for (mut row, &bv) in out.axis_iter_mut(Axis(0)).zip(bias) {
        row += bv;
    }
    out
}

pub(crate) struct ConvGrads {
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
    pub input: Array2<f64>,
}

/// Gradients of a [`forward`] call given the upstream gradient `dz`.
pub(crate) fn backward(x: ArrayView2<f64>, weights: ArrayView2<f64>, dz: ArrayView2<f64>, g: Geometry) -> ConvGrads {
    let (cout, k) = weights.dim();
    let cin = k / 9;
    // transposed, spatially flipped kernel: wt[ci, co*9 + j] = w[co, ci*9 + 8 - j]
    let mut wt = Array2::<f64>::zeros((cin, cout * 9));
    for co in 0..cout {
        for ci in 0..cin {
            for j in 0..9 {
                wt[[ci, co * 9 + j]] = weights[[co, ci * 9 + 8 - j]];
            }
        }
    }
    let chunks = g.chunks();
    let parts: Vec<(Array2<f64>, Array2<f64>)> = chunks
        .par_iter()
        .map(|&(b, r0, r1)| {
            let (c0, c1) = g.column_range(b, r0, r1);
            let col = im2col(&x, g, b, r0, r1);
            let dz_chunk = dz.slice(s![.., c0..c1]);
            let dw = dz_chunk.dot(&col.t());
            let dcol = im2col(&dz, g, b, r0, r1);
            let dx = wt.dot(&dcol);
            (dw, dx)
        })
        .collect();
    let mut dweights = Array2::<f64>::zeros((cout, k));
    let mut dinput = Array2::<f64>::zeros((cin, g.columns()));
    for (&(b, r0, r1), (dw, dx)) in chunks.iter().zip(parts) {
        dweights += &dw;
        let (c0, c1) = g.column_range(b, r0, r1);
        dinput.slice_mut(s![.., c0..c1]).assign(&dx);
    }
    let bias = dz.axis_iter(Axis(0)).map(|r| r.sum()).collect();
    ConvGrads {
        weights: dweights,
        bias,
        input: dinput,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution.
    fn naive(x: &Array2<f64>, w: &Array2<f64>, bias: &[f64], g: Geometry) -> Array2<f64> {
        let (cout, k) = w.dim();
        let cin = k / 9;
        let mut out = Array2::zeros((cout, g.columns()));
        for b in 0..g.batch {
            for co in 0..cout {
                for y in 0..g.height {
                    for x_ in 0..g.width {
                        let mut acc = bias[co];
                        for ci in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = x_ as isize + kx as isize - 1;
                                    if sy < 0 || sx < 0 || sy >= g.height as isize || sx >= g.width as isize {
                                        continue;
                                    }
                                    let idx = b * g.pixels() + sy as usize * g.width + sx as usize;
                                    acc += w[[co, ci * 9 + ky * 3 + kx]] * x[[ci, idx]];
                                }
                            }
                        }
                        out[[co, b * g.pixels() + y * g.width + x_]] = acc;
                    }
                }
            }
        }
        out
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Geometry {
            batch: 2,
            height: 11,
            width: 7,
        };
        let x = random(3, g.columns(), &mut rng);
        let w = random(4, 27, &mut rng);
        let bias = [0.1, -0.2, 0.3, 0.0];
        let fast = forward(x.view(), w.view(), &bias, g);
        let slow = naive(&x, &w, &bias, g);
        assert!((fast - slow).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = Geometry {
            batch: 2,
            height: 9,
            width: 10,
        };
        let x = random(2, g.columns(), &mut rng);
        let w = random(3, 18, &mut rng);
        let dz = random(3, g.columns(), &mut rng);
        let zero = [0.0; 3];
        let grads = backward(x.view(), w.view(), dz.view(), g);
        // <conv(x), dz> = <x, dx> = <w, dw>
        let y = forward(x.view(), w.view(), &zero, g);
        let lhs = (&y * &dz).sum();
        assert!((lhs - (&x * &grads.input).sum()).abs() < 1e-9);
        assert!((lhs - (&w * &grads.weights).sum()).abs() < 1e-9);
        let db: f64 = dz.sum();
        assert!((grads.bias.iter().sum::<f64>() - db).abs() < 1e-9);
    }
}
