//! Convolution as matrix multiplication.
//!
//! A batch of feature maps is stored one sample per column, each column laid
//! out channel-major (`c, y, x`). The patch matrix has one row per
//! `(channel, ky, kx)` tap and one column per `(sample, oy, ox)` position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("feature map dimensions must be positive".into()));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("kernel and stride must be positive".into()));
        }
        if self.kernel > self.height || self.kernel > self.width {
            return Err(Error::InvalidArgument(format!(
                "kernel {} larger than {}x{} input",
                self.kernel, self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn out_height(&self) -> usize {
        (self.height - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width - self.kernel) / self.stride + 1
    }

    pub fn positions(&self) -> usize {
        self.out_height() * self.out_width()
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Rearranges `(C·H·W) × B` feature maps into a `(C·k·k) × (B·OH·OW)` patch matrix.
pub fn extract_patches(maps: &Matrix, g: &ConvGeometry) -> Result<Matrix> {
    g.validate()?;
    if maps.rows() != g.input_len() {
        return Err(Error::Shape(format!(
            "feature map has {} rows, expected {}x{}x{} = {}",
            maps.rows(),
            g.channels,
            g.height,
            g.width,
            g.input_len()
        )));
    }
    let batch = maps.cols();
    let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
    let npos = oh * ow;
    let mut out = Matrix::zeros(g.patch_len(), batch * npos);
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let src = (c * g.height + oy * g.stride + ky) * g.width + ox * g.stride + kx;
                        let src_row = maps.row(src);
                        let pos = oy * ow + ox;
                        for (b, &v) in src_row.iter().enumerate() {
                            out[(row, b * npos + pos)] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`extract_patches`]: scatter-adds patch gradients back onto maps.
pub(crate) fn fold_patches(patches: &Matrix, g: &ConvGeometry, batch: usize) -> Matrix {
    let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
    let npos = oh * ow;
    let mut maps = Matrix::zeros(g.input_len(), batch);
    for c in 0..g.channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let dst = (c * g.height + oy * g.stride + ky) * g.width + ox * g.stride + kx;
                        let pos = oy * ow + ox;
                        for b in 0..batch {
                            maps[(dst, b)] += patches[(row, b * npos + pos)];
                        }
                    }
                }
            }
        }
    }
    maps
}

/// `(O × B·P)` position-major output to `(O·P) × B` sample columns.
pub(crate) fn positions_to_maps(z: &Matrix, batch: usize, npos: usize) -> Matrix {
    let out_ch = z.rows();
    let mut maps = Matrix::zeros(out_ch * npos, batch);
    for o in 0..out_ch {
        let zr = z.row(o);
        for b in 0..batch {
            for p in 0..npos {
                maps[(o * npos + p, b)] = zr[b * npos + p];
            }
        }
    }
    maps
}

/// Inverse of [`positions_to_maps`].
pub(crate) fn maps_to_positions(maps: &Matrix, out_ch: usize, npos: usize) -> Matrix {
    let batch = maps.cols();
    let mut z = Matrix::zeros(out_ch, batch * npos);
    for o in 0..out_ch {
        for p in 0..npos {
            let mr = maps.row(o * npos + p);
            for (b, &v) in mr.iter().enumerate() {
                z[(o, b * npos + p)] = v;
            }
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_one_kernel_is_identity_rearrangement() {
        // 2 channels, 2x2, one sample
        let maps = Matrix::from_columns(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]]).unwrap();
        let g = ConvGeometry { channels: 2, height: 2, width: 2, kernel: 1, stride: 1 };
        let p = extract_patches(&maps, &g).unwrap();
        assert_eq!(p.shape(), (2, 4));
        // column = pixel, rows = channel values at that pixel
        assert_eq!(p.column(0), vec![1.0, 5.0]);
        assert_eq!(p.column(3), vec![4.0, 8.0]);
    }

    #[test]
    fn two_by_two_kernel_on_three_by_three_gives_four_columns() {
        let maps = Matrix::from_columns(&[(1..=9).map(f64::from).collect()]).unwrap();
        let g = ConvGeometry { channels: 1, height: 3, width: 3, kernel: 2, stride: 1 };
        let p = extract_patches(&maps, &g).unwrap();
        assert_eq!(p.shape(), (4, 4));
        assert_eq!(p.column(0), vec![1.0, 2.0, 4.0, 5.0]);
        assert_eq!(p.column(3), vec![5.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn kernel_larger_than_input_is_rejected() {
        let maps = Matrix::zeros(4, 1);
        let g = ConvGeometry { channels: 1, height: 2, width: 2, kernel: 3, stride: 1 };
        assert!(extract_patches(&maps, &g).is_err());
    }

    #[test]
    fn stride_two_counts() {
        let g = ConvGeometry { channels: 1, height: 5, width: 5, kernel: 3, stride: 2 };
        assert_eq!((g.out_height(), g.out_width()), (2, 2));
    }

    #[test]
    fn fold_is_adjoint_of_extract() {
        // <extract(x), y> == <x, fold(y)>
        let g = ConvGeometry { channels: 2, height: 4, width: 3, kernel: 2, stride: 1 };
        let x = Matrix::from_vec(g.input_len(), 2, (0..g.input_len() * 2).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let px = extract_patches(&x, &g).unwrap();
        let y = Matrix::from_vec(px.rows(), px.cols(), (0..px.rows() * px.cols()).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let fy = fold_patches(&y, &g, 2);
        let lhs: f64 = px.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.as_slice().iter().zip(fy.as_slice()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
