//! 8-bit grayscale raster with scanline fills for convex shapes.

use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, background: u8) -> Self {
        Self { width, height, pixels: vec![background; width as usize * height as usize] }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = value;
    }

    fn hspan(&mut self, y: i64, x0: i64, x1: i64, value: u8) {
        if y < 0 || y >= self.height as i64 {
            return;
        }
        let x0 = x0.max(0);
        let x1 = x1.min(self.width as i64);
        if x0 >= x1 {
            return;
        }
        let row = y as usize * self.width as usize;
        self.pixels[row + x0 as usize..row + x1 as usize].fill(value);
    }

    pub fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, value: u8) {
        for yy in y..(y + h).min(self.height) {
            self.hspan(yy as i64, x as i64, (x + w) as i64, value);
        }
    }

    /// One-pixel frame just outside the rectangle.
    pub fn frame(&mut self, x: u32, y: u32, w: u32, h: u32, value: u8) {
        let (x0, y0) = (x as i64 - 1, y as i64 - 1);
        let (x1, y1) = (x as i64 + w as i64, y as i64 + h as i64);
        self.hspan(y0, x0, x1 + 1, value);
        self.hspan(y1, x0, x1 + 1, value);
        for yy in y0..=y1 {
            self.hspan(yy, x0, x0 + 1, value);
            self.hspan(yy, x1, x1 + 1, value);
        }
    }

    pub fn blit(&mut self, src: &GrayImage, x: u32, y: u32) {
        for sy in 0..src.height {
            let ty = y + sy;
            if ty >= self.height {
                break;
            }
            let w = src.width.min(self.width.saturating_sub(x)) as usize;
            let s = sy as usize * src.width as usize;
            let t = ty as usize * self.width as usize + x as usize;
            self.pixels[t..t + w].copy_from_slice(&src.pixels[s..s + w]);
        }
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> GrayImage {
        let mut out = GrayImage::new(w, h, 0);
        for yy in 0..h {
            let s = (y + yy) as usize * self.width as usize + x as usize;
            let t = yy as usize * w as usize;
            out.pixels[t..t + w as usize].copy_from_slice(&self.pixels[s..s + w as usize]);
        }
        out
    }

    /// Fills a convex region row by row; `extent` gives its horizontal span
    /// `[left, right)` at a scanline centre.
    fn fill_rows(&mut self, cy: f64, r: f64, value: u8, extent: impl Fn(f64) -> Option<(f64, f64)>) {
        let y0 = (cy - r).floor() as i64;
        let y1 = (cy + r).ceil() as i64;
        for y in y0..=y1 {
            if let Some((left, right)) = extent(y as f64 + 0.5) {
                // pixel x is covered when its centre x + 0.5 lies in [left, right)
                let x0 = (left - 0.5).ceil() as i64;
                let x1 = (right - 0.5).ceil() as i64;
                self.hspan(y, x0, x1, value);
            }
        }
    }

    pub fn fill_circle(&mut self, cx: f64, cy: f64, r: f64, value: u8) {
        if r <= 0.0 {
            return;
        }
        self.fill_rows(cy, r, value, |y| {
            let dy = y - cy;
            let q = r * r - dy * dy;
            (q >= 0.0).then(|| {
                let dx = q.sqrt();
                (cx - dx, cx + dx)
            })
        });
    }

    pub fn fill_polygon(&mut self, vertices: &[(f64, f64)], value: u8) {
        if vertices.len() < 3 {
            return;
        }
        let (lo, hi) = vertices.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v.1), hi.max(v.1)));
        let cy = (lo + hi) / 2.0;
        let r = (hi - lo) / 2.0;
        self.fill_rows(cy, r, value, |y| {
            let mut left = f64::MAX;
            let mut right = f64::MIN;
            for i in 0..vertices.len() {
                let (ax, ay) = vertices[i];
                let (bx, by) = vertices[(i + 1) % vertices.len()];
                if (ay <= y && y < by) || (by <= y && y < ay) {
                    let x = ax + (y - ay) * (bx - ax) / (by - ay);
                    left = left.min(x);
                    right = right.max(x);
                }
            }
            (left < right).then_some((left, right))
        });
    }

    /// Count and centroid of pixels differing from `background`.
    pub fn ink(&self, background: u8) -> Option<(usize, f64, f64)> {
        let (mut n, mut sx, mut sy) = (0usize, 0f64, 0f64);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) != background {
                    n += 1;
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                }
            }
        }
        (n > 0).then(|| (n, sx / n as f64, sy / n as f64))
    }

    /// Bounding box `(x0, y0, x1, y1)` of non-background pixels, inclusive.
    pub fn ink_bounds(&self, background: u8) -> Option<(u32, u32, u32, u32)> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) != background {
                    b = Some(match b {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        b
    }
}

/// Vertices of a regular `n`-gon with circumradius `r`, one vertex pointing up.
pub fn regular_polygon(n: usize, cx: f64, cy: f64, r: f64) -> Vec<(f64, f64)> {
    // squares sit flat, every other shape points up
    let start = if n == 4 { -PI / 4.0 } else { -PI / 2.0 };
    (0..n)
        .map(|i| {
            let a = start + 2.0 * PI * i as f64 / n as f64;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_is_symmetric() {
        let mut img = GrayImage::new(40, 40, 255);
        img.fill_circle(20.0, 20.0, 10.0, 0);
        let (n, x, y) = img.ink(255).unwrap();
        assert!((x - 20.0).abs() < 1e-9 && (y - 20.0).abs() < 1e-9);
        assert!((n as f64 - PI * 100.0).abs() < 20.0);
    }

    #[test]
    fn square_fills_its_box() {
        let mut img = GrayImage::new(40, 40, 255);
        let r = 10.0 * 2f64.sqrt();
        img.fill_polygon(&regular_polygon(4, 20.0, 20.0, r), 7);
        assert_eq!(img.ink_bounds(255), Some((10, 10, 29, 29)));
    }

    #[test]
    fn crop_of_blit_round_trips() {
        let mut small = GrayImage::new(5, 3, 0);
        small.pixels.iter_mut().enumerate().for_each(|(i, p)| *p = i as u8);
        let mut big = GrayImage::new(20, 20, 200);
        big.blit(&small, 7, 4);
        assert_eq!(big.crop(7, 4, 5, 3), small);
    }
}
