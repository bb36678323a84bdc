use rand::Rng;

use crate::sim::Image;

/// Translates each `h x w` plane of `data` by `(dx, dy)` pixels. Pixels
/// that come from outside the plane replicate the nearest edge.
pub fn shift_planes<T: Copy>(data: &[T], planes: usize, h: usize, w: usize, dx: i64, dy: i64) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for p in 0..planes {
        let plane = &data[p * h * w..(p + 1) * h * w];
        for y in 0..h as i64 {
            let sy = (y - dy).clamp(0, h as i64 - 1) as usize;
            for x in 0..w as i64 {
                let sx = (x - dx).clamp(0, w as i64 - 1) as usize;
                out.push(plane[sy * w + sx]);
            }
        }
    }
    out
}

/// Integer offsets drawn uniformly from `[-max_shift, max_shift]` per axis.
pub fn draw_shift<R: Rng + ?Sized>(max_shift: usize, rng: &mut R) -> (i64, i64) {
    let m = max_shift as i64;
    (rng.random_range(-m..=m), rng.random_range(-m..=m))
}

pub fn random_shift<R: Rng + ?Sized>(image: &Image, max_shift: usize, rng: &mut R) -> Image {
    let (dx, dy) = draw_shift(max_shift, rng);
    Image {
        channels: image.channels,
        height: image.height,
        width: image.width,
        data: shift_planes(&image.data, image.channels, image.height, image.width, dx, dy),
    }
}

/// Augments the current-image half of a stacked `[2C, H, W]` frame; the
/// goal half is copied unchanged.
pub fn shift_current<T: Copy, R: Rng + ?Sized>(
    frame: &[T],
    channels: usize,
    h: usize,
    w: usize,
    max_shift: usize,
    rng: &mut R,
) -> Vec<T> {
    let (dx, dy) = draw_shift(max_shift, rng);
    let split = channels * h * w;
    let mut out = shift_planes(&frame[..split], channels, h, w, dx, dy);
    out.extend_from_slice(&frame[split..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shift_moves_content() {
        let data: Vec<i32> = (0..12).collect();
        let s = shift_planes(&data, 1, 3, 4, 1, 0);
        assert_eq!(&s[..4], &[0, 0, 1, 2]);
        let s = shift_planes(&data, 1, 3, 4, 0, -1);
        assert_eq!(&s[8..], &[8, 9, 10, 11]);
        assert_eq!(&s[..4], &[4, 5, 6, 7]);
    }

    #[test]
    fn zero_shift_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = Image {
            channels: 3,
            height: 4,
            width: 5,
            data: (0..60).map(|v| v as f32 / 60.0).collect(),
        };
        assert_eq!(random_shift(&img, 0, &mut rng), img);
    }

    #[test]
    fn goal_half_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frame: Vec<f64> = (0..2 * 2 * 3 * 3).map(|v| v as f64).collect();
        for _ in 0..20 {
            let out = shift_current(&frame, 2, 3, 3, 2, &mut rng);
            assert_eq!(&out[18..], &frame[18..]);
        }
    }
}
