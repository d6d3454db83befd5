use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::PlaneSpec;
use crate::image::Image;

/// Plane texture plus the mapping from plane metres to texel coordinates.
#[derive(Debug, Clone)]
pub struct PlaneTexture {
    pub image: Image,
    pub spec: PlaneSpec,
}

impl PlaneTexture {
    /// Texel coordinates of a plane point; `+y` on the plane is up in the texture.
    #[inline]
    pub fn texel(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        let s = self.spec.texels_per_m;
        (
            (x_m + self.spec.width_m / 2.0) * s,
            (self.spec.height_m / 2.0 - y_m) * s,
        )
    }

    pub fn in_field(&self, x_m: f64, y_m: f64) -> bool {
        let [cx, cy] = self.spec.field_center_m;
        (x_m - cx).powi(2) + (y_m - cy).powi(2) <= self.spec.field_radius_m.powi(2)
    }

    pub fn generate(spec: &PlaneSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.texture_seed);
        let w = (spec.width_m * spec.texels_per_m).round().max(2.0) as u32;
        let h = (spec.height_m * spec.texels_per_m).round().max(2.0) as u32;
        let s = spec.texels_per_m;

        let cells_x = (spec.width_m / spec.cell_m).ceil() as usize + 1;
        let cells_y = (spec.height_m / spec.cell_m).ceil() as usize + 1;
        let cells: Vec<f64> = (0..cells_x * cells_y).map(|_| rng.gen_range(80.0..180.0)).collect();

        // Smooth value noise on a coarse lattice.
        let lattice_m = 0.025;
        let lx = (spec.width_m / lattice_m).ceil() as usize + 2;
        let ly = (spec.height_m / lattice_m).ceil() as usize + 2;
        let lattice: Vec<f64> = (0..lx * ly).map(|_| rng.gen_range(-22.0..22.0)).collect();

        let texture = |tx: f64, ty: f64| -> f64 {
            let xm = tx / s;
            let ym = ty / s;
            let cx = (xm / spec.cell_m) as usize;
            let cy = (ym / spec.cell_m) as usize;
            let base = cells[cy.min(cells_y - 1) * cells_x + cx.min(cells_x - 1)];
            let gx = xm / lattice_m;
            let gy = ym / lattice_m;
            let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
            let (fx, fy) = (gx - ix as f64, gy - iy as f64);
            let (fx, fy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
            let at = |x: usize, y: usize| lattice[y.min(ly - 1) * lx + x.min(lx - 1)];
            let n = (at(ix, iy) * (1.0 - fx) + at(ix + 1, iy) * fx) * (1.0 - fy)
                + (at(ix, iy + 1) * (1.0 - fx) + at(ix + 1, iy + 1) * fx) * fy;
            base + n
        };

        let mut lum = vec![0.0f64; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                lum[(y * w + x) as usize] = texture(x as f64 + 0.5, y as f64 + 0.5);
            }
        }
        // Blobs with soft edges give the detector well-localised extrema.
        for _ in 0..spec.blobs {
            let bx = rng.gen_range(0.0..w as f64);
            let by = rng.gen_range(0.0..h as f64);
            let r = rng.gen_range(0.003..0.012) * s;
            let v = if rng.gen_bool(0.5) {
                rng.gen_range(60.0..90.0)
            } else {
                rng.gen_range(190.0..235.0)
            };
            let x0 = (bx - 2.0 * r).max(0.0) as u32;
            let x1 = ((bx + 2.0 * r) as u32).min(w - 1);
            let y0 = (by - 2.0 * r).max(0.0) as u32;
            let y1 = ((by + 2.0 * r) as u32).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let d = ((x as f64 - bx).powi(2) + (y as f64 - by).powi(2)).sqrt();
                    let a = (1.5 - d / r).clamp(0.0, 1.0);
                    if a > 0.0 {
                        let l = &mut lum[(y * w + x) as usize];
                        *l = *l * (1.0 - a) + v * a;
                    }
                }
            }
        }

        let mut image = Image::new(w, h);
        let tex = PlaneTexture {
            image: Image::new(1, 1),
            spec: *spec,
        };
        for y in 0..h {
            for x in 0..w {
                let l = lum[(y * w + x) as usize].clamp(60.0, 240.0);
                let xm = (x as f64 + 0.5) / s - spec.width_m / 2.0;
                let ym = spec.height_m / 2.0 - (y as f64 + 0.5) / s;
                let px = if tex.in_field(xm, ym) {
                    // Saturated reds: hue stays at the red end of the wheel.
                    [l, 0.18 * l, 0.22 * l]
                } else {
                    // Faint blue-green tint.
                    [0.94 * l, l, 1.02 * l]
                };
                image.put_pixel(
                    x,
                    y,
                    ::image::Rgb([
                        px[0].round().clamp(0.0, 255.0) as u8,
                        px[1].round().clamp(0.0, 255.0) as u8,
                        px[2].round().clamp(0.0, 255.0) as u8,
                    ]),
                );
            }
        }
        PlaneTexture { image, spec: *spec }
    }
}
