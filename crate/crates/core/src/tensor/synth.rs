//! Deterministic synthetic token grids for fixtures.

use super::{GridError, TokenGrid, VideoFeatures};
use crate::rng::Rng64;

/// Fills an `h × w × c` grid with values in `[-1, 1)` drawn from
/// [`Rng64`] seeded with `seed`, in storage order.
pub fn synth_grid(seed: u64, h: usize, w: usize, c: usize) -> Result<TokenGrid, GridError> {
    if h == 0 || w == 0 || c == 0 {
        return Err(GridError::ZeroDimension {
            height: h,
            width: w,
            channels: c,
        });
    }
    let mut rng = Rng64::new(seed);
    let data = (0..h * w * c)
        .map(|_| rng.next_signed_unit() as f32)
        .collect();
    TokenGrid::new(h, w, c, data)
}

/// `frames` synthetic grids, frame `i` seeded with `seed + i`, sampled at
/// `i + 0.5` seconds.
pub fn synth_video(
    seed: u64,
    frames: usize,
    h: usize,
    w: usize,
    c: usize,
) -> Result<VideoFeatures, GridError> {
    let grids = (0..frames)
        .map(|i| synth_grid(seed.wrapping_add(i as u64), h, w, c))
        .collect::<Result<Vec<_>, _>>()?;
    let ts = (0..frames).map(|i| i as f64 + 0.5).collect();
    VideoFeatures::new(grids, ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(
            synth_grid(7, 2, 2, 1).unwrap(),
            synth_grid(7, 2, 2, 1).unwrap()
        );
    }

    #[test]
    fn seeds_differ() {
        let a = synth_grid(7, 2, 2, 1).unwrap();
        let b = synth_grid(8, 2, 2, 1).unwrap();
        assert!(a.data().iter().zip(b.data()).any(|(x, y)| x != y));
    }

    #[test]
    fn bounded() {
        let g = synth_grid(123, 24, 24, 16).unwrap();
        assert!(g.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            synth_grid(1, 0, 2, 2),
            Err(GridError::ZeroDimension { .. })
        ));
        assert!(synth_grid(1, 2, 2, 0).is_err());
    }
}
