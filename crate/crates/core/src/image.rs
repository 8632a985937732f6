//! Dense floating-point raster shared by log images, brightness increments,
//! gradients, depth maps and rendered frames.

use nalgebra::Vector2;

/// Row-major `width x height` raster of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF64 {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageF64 {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Wraps an existing row-major buffer. Panics if the length does not
    /// match `width * height`.
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "buffer size mismatch");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn add(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] += value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Bilinear sample; `None` outside the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !self.contains(x, y) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let v00 = self.get(x0, y0);
        let v10 = self.get(x0 + 1, y0);
        let v01 = self.get(x0, y0 + 1);
        let v11 = self.get(x0 + 1, y0 + 1);
        Some(v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy)
    }

    /// Separable Catmull-Rom bicubic sample.
    ///
    /// Valid domain is `[1, w-2] x [1, h-2]` so that the full 4x4 support is
    /// available; `None` outside. Reproduces the image exactly at integer
    /// locations and reproduces linear ramps exactly.
    pub fn sample_cubic(&self, x: f64, y: f64) -> Option<f64> {
        if self.width < 4 || self.height < 4 {
            return None;
        }
        if x < 1.0 || y < 1.0 || x > (self.width - 2) as f64 || y > (self.height - 2) as f64 {
            return None;
        }
        // Clamp the base cell so x = w-2 falls on the t = 1 edge of the last
        // interior cell instead of requiring a pixel beyond the border.
        let x0 = (x.floor() as usize).min(self.width - 3).max(1);
        let y0 = (y.floor() as usize).min(self.height - 3).max(1);
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;
        let wx = catmull_rom_weights(tx);
        let wy = catmull_rom_weights(ty);
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let row = y0 + j - 1;
            let mut line = 0.0;
            for (i, wxi) in wx.iter().enumerate() {
                line += wxi * self.get(x0 + i - 1, row);
            }
            acc += wyj * line;
        }
        Some(acc)
    }
}

#[inline]
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Free-function form of [`ImageF64::sample_cubic`], kept public because the
/// tracker and the bundle adjustment both sample increment and log images.
pub fn sample_cubic(img: &ImageF64, u: Vector2<f64>) -> Option<f64> {
    img.sample_cubic(u.x, u.y)
}
