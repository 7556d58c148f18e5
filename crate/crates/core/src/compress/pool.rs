use super::CompressError;
use crate::tensor::{CompressedTokenSet, TokenGrid};

pub const MIN_POOL_SIDE: usize = 4;
pub const MAX_POOL_SIDE: usize = 28;

/// Square pooling output shape with side in `[4, 28]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PoolShape {
    out_h: usize,
    out_w: usize,
}

impl PoolShape {
    pub fn new(out_h: usize, out_w: usize) -> Result<Self, CompressError> {
        let range = MIN_POOL_SIDE..=MAX_POOL_SIDE;
        if out_h != out_w || !range.contains(&out_h) {
            return Err(CompressError::PoolShapeRange { out_h, out_w });
        }
        Ok(Self { out_h, out_w })
    }

    pub fn square(side: usize) -> Result<Self, CompressError> {
        Self::new(side, side)
    }

    pub fn out_h(&self) -> usize {
        self.out_h
    }

    pub fn out_w(&self) -> usize {
        self.out_w
    }

    pub fn side(&self) -> usize {
        self.out_h
    }

    pub fn token_count(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Whether the shape is no larger than `grid` in either dimension.
    pub fn fits(&self, grid: &TokenGrid) -> bool {
        self.out_h <= grid.height() && self.out_w <= grid.width()
    }
}

/// Half-open input range `[floor(i·len/out), ceil((i+1)·len/out))` feeding
/// output cell `i`.
pub fn bin_bounds(i: usize, len: usize, out: usize) -> (usize, usize) {
    let start = i * len / out;
    let end = ((i + 1) * len).div_ceil(out);
    (start, end)
}

/// Adaptive average pooling onto a validated [`PoolShape`].
pub fn adaptive_avg_pool(
    grid: &TokenGrid,
    shape: PoolShape,
) -> Result<CompressedTokenSet, CompressError> {
    adaptive_avg_pool2d(grid, shape.out_h, shape.out_w)
}

/// Adaptive average pooling onto any `out_h × out_w` with
/// `1 ≤ out_h ≤ H` and `1 ≤ out_w ≤ W`.
///
/// Output tokens are row-major; each weight is its bin's cell count.
/// Neighbouring bins overlap when the size ratio is not integral, so weights
/// then sum to more than `H·W` and the set's source count is that sum.
pub fn adaptive_avg_pool2d(
    grid: &TokenGrid,
    out_h: usize,
    out_w: usize,
) -> Result<CompressedTokenSet, CompressError> {
    let (h, w, c) = grid.shape();
    if out_h == 0 || out_w == 0 || out_h > h || out_w > w {
        return Err(CompressError::InvalidPoolShape {
            out_h,
            out_w,
            in_h: h,
            in_w: w,
        });
    }
    let mut data = Vec::with_capacity(out_h * out_w * c);
    let mut weights = Vec::with_capacity(out_h * out_w);
    let mut acc = vec![0.0f64; c];
    for i in 0..out_h {
        let (r0, r1) = bin_bounds(i, h, out_h);
        for j in 0..out_w {
            let (c0, c1) = bin_bounds(j, w, out_w);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for r in r0..r1 {
                for col in c0..c1 {
                    for (a, &v) in acc.iter_mut().zip(grid.at(r, col)) {
                        *a += f64::from(v);
                    }
                }
            }
            let count = (r1 - r0) * (c1 - c0);
            data.extend(acc.iter().map(|&a| (a / count as f64) as f32));
            weights.push(count as u32);
        }
    }
    let source = weights.iter().map(|&w| w as usize).sum();
    Ok(CompressedTokenSet::new(c, data, weights, source)?)
}
