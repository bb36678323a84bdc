use crate::error::{Error, Result};

pub const DEPTH_BLOCKS: usize = 16;

pub type DepthVector = [f64; DEPTH_BLOCKS];

/// Column ranges of the 16 blocks. When the width is not a multiple of 16
/// the leftmost `width % 16` blocks take one extra column each.
pub fn block_ranges(width: usize) -> Vec<std::ops::Range<usize>> {
    let base = width / DEPTH_BLOCKS;
    let extra = width % DEPTH_BLOCKS;
    let mut start = 0;
    (0..DEPTH_BLOCKS)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Min-pools a `height x width` depth image (meters, row-major) into 16
/// normalized blocks, using only the central 20% of rows.
pub fn preprocess_depth_image(depth: &[f64], height: usize, width: usize, max_depth: f64) -> Result<DepthVector> {
    if width < DEPTH_BLOCKS {
        return Err(Error::Shape(format!("depth width {width} is below {DEPTH_BLOCKS}")));
    }
    if depth.len() != height * width || height == 0 {
        return Err(Error::Shape(format!(
            "depth buffer has {} values for {height}x{width}",
            depth.len()
        )));
    }
    let keep = ((height as f64 * 0.2).round() as usize).max(1);
    let top = (height - keep) / 2;
    let mut out = [1.0; DEPTH_BLOCKS];
    for (b, cols) in block_ranges(width).into_iter().enumerate() {
        let mut m = f64::INFINITY;
        for r in top..top + keep {
            for c in cols.clone() {
                m = m.min(depth[r * width + c]);
            }
        }
        out[b] = (m.clamp(0.0, max_depth)) / max_depth;
    }
    Ok(out)
}

/// Ray-strip form: the strip is its own central band.
pub fn preprocess_depth(rays: &[f64], max_depth: f64) -> Result<DepthVector> {
    preprocess_depth_image(rays, 1, rays.len(), max_depth)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigmoid(10 (beta - min s^d))`.
pub fn soft_label(sd: &[f64], beta: f64) -> f64 {
    let m = sd.iter().copied().fold(f64::INFINITY, f64::min);
    sigmoid(10.0 * (beta - m))
}

/// Deterministic 1:1 mixture: even positions take the hard label, odd
/// positions the soft one.
pub fn mixed_label(position: usize, hard: bool, soft: f64) -> f64 {
    if position % 2 == 0 {
        f64::from(u8::from(hard))
    } else {
        soft
    }
}

/// Safer turning direction. `-1` when the left half of the view is clearer
/// (subtracting `D * delta` from the yaw rate then turns left), `+1`
/// otherwise, including ties.
pub fn compute_direction(sd: &DepthVector) -> f64 {
    let half = DEPTH_BLOCKS / 2;
    let left: f64 = sd[..half].iter().sum::<f64>() / half as f64;
    let right: f64 = sd[half..].iter().sum::<f64>() / half as f64;
    if left > right {
        -1.0
    } else {
        1.0
    }
}
