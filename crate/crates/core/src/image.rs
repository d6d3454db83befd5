//! Image helpers shared by every stage.

/// 8-bit RGB frame.
pub type Image = ::image::RgbImage;

/// ITU-R BT.601 luma of an 8-bit RGB pixel, in `[0, 255]`.
#[inline]
pub fn luma(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

/// Single-channel `f32` image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Luma scaled to `[0, 1]`.
    pub fn from_rgb(img: &Image) -> Self {
        let (w, h) = img.dimensions();
        let data = img.pixels().map(|p| (luma(p.0) / 255.0) as f32).collect();
        Self {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Take every second pixel in both directions.
    pub fn downsample2(&self) -> Self {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        let mut out = Self::new(w, h);
        for y in 0..h {
            for x in 0..w {
                out.data[y * w + x] = self.get(2 * x, 2 * y);
            }
        }
        out
    }
}

/// Solid-colour image.
pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Image {
    Image::from_pixel(width, height, ::image::Rgb(rgb))
}
