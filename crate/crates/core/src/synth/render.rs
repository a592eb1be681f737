//! Anti-aliased drawing of the stick-figure scene.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Image;

/// Floating-point RGB raster with values in `[0, 255]`.
pub(crate) struct Canvas {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
}

const SUB: usize = 4;

impl Canvas {
    pub fn from_background(width: usize, height: usize, background: &[f64]) -> Self {
        debug_assert_eq!(background.len(), width * height * 3);
        Canvas {
            width,
            height,
            data: background.to_vec(),
        }
    }

    fn blend(&mut self, x: usize, y: usize, color: [f64; 3], alpha: f64) {
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.data[i + c] += alpha * (color[c] - self.data[i + c]);
        }
    }

    /// Pixel box covering the given extent, clipped to the canvas.
    fn bounds(&self, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Option<(usize, usize, usize, usize)> {
        let x0 = x_lo.floor().max(0.0) as usize;
        let y0 = y_lo.floor().max(0.0) as usize;
        let x1 = (x_hi.ceil().max(0.0) as usize).min(self.width);
        let y1 = (y_hi.ceil().max(0.0) as usize).min(self.height);
        (x0 < x1 && y0 < y1).then_some((x0, x1, y0, y1))
    }

    /// Fills every pixel by the fraction of its `SUB x SUB` samples for which `inside` holds.
    fn fill_region(&mut self, bbox: (usize, usize, usize, usize), color: [f64; 3], inside: impl Fn(f64, f64) -> bool) {
        let (x0, x1, y0, y1) = bbox;
        let step = 1.0 / SUB as f64;
        for y in y0..y1 {
            for x in x0..x1 {
                let mut hits = 0;
                for sy in 0..SUB {
                    for sx in 0..SUB {
                        let px = x as f64 + (sx as f64 + 0.5) * step;
                        let py = y as f64 + (sy as f64 + 0.5) * step;
                        hits += inside(px, py) as usize;
                    }
                }
                if hits > 0 {
                    self.blend(x, y, color, hits as f64 / (SUB * SUB) as f64);
                }
            }
        }
    }

    pub fn fill_disc(&mut self, cx: f64, cy: f64, radius: f64, color: [f64; 3]) {
        if let Some(b) = self.bounds(cx - radius, cx + radius, cy - radius, cy + radius) {
            let r2 = radius * radius;
            self.fill_region(b, color, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r2);
        }
    }

    /// Fills a convex polygon given in either winding order.
    pub fn fill_convex(&mut self, pts: &[(f64, f64)], color: [f64; 3]) {
        let (mut xl, mut xh, mut yl, mut yh) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in pts {
            xl = xl.min(x);
            xh = xh.max(x);
            yl = yl.min(y);
            yh = yh.max(y);
        }
        let Some(b) = self.bounds(xl, xh, yl, yh) else { return };
        let n = pts.len();
        self.fill_region(b, color, |x, y| {
            let mut sign = 0.0f64;
            for i in 0..n {
                let (ax, ay) = pts[i];
                let (bx, by) = pts[(i + 1) % n];
                let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
                if cross != 0.0 {
                    if sign == 0.0 {
                        sign = cross.signum();
                    } else if cross.signum() != sign {
                        return false;
                    }
                }
            }
            true
        });
    }

    /// Quantizes to 8 bits after adding Gaussian sensor noise.
    pub fn finish<R: Rng + ?Sized>(self, noise: f64, rng: &mut R) -> Image {
        let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise level");
        let pixels = self
            .data
            .iter()
            .map(|&v| {
                let n = if noise > 0.0 { normal.sample(rng) } else { 0.0 };
                (v + n).round().clamp(0.0, 255.0) as u8
            })
            .collect();
        Image::from_pixels(self.width, self.height, 3, pixels).expect("canvas dimensions")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disc_area_is_close_to_pi_r_squared() {
        let mut c = Canvas::from_background(40, 40, &vec![0.0; 40 * 40 * 3]);
        c.fill_disc(20.3, 19.6, 7.0, [255.0, 255.0, 255.0]);
        let area: f64 = c.data.iter().step_by(3).sum::<f64>() / 255.0;
        assert!((area - std::f64::consts::PI * 49.0).abs() < 1.0, "{area}");
    }

    #[test]
    fn convex_fill_covers_square() {
        let mut c = Canvas::from_background(10, 10, &vec![0.0; 300]);
        c.fill_convex(&[(2.0, 2.0), (6.0, 2.0), (6.0, 6.0), (2.0, 6.0)], [100.0; 3]);
        let img = c.finish(0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(img.rgb(3, 3), [100; 3]);
        assert_eq!(img.rgb(7, 3), [0; 3]);
        assert_eq!(img.pixels.iter().filter(|&&p| p == 100).count(), 16 * 3);
    }
}
