//! Synthetic imagery with known ground truth: soft-edged disks, eye crops
//! and smooth random textures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::imgproc::GrayImage;

/// Default width of the optical edge blur, in pixels.
pub const EDGE_BLUR: f64 = 0.6;

/// Soft step: 0 far outside (`d << 0`), 1 far inside, logistic in between.
/// Stands in for the point-spread function of a real camera.
#[inline]
fn soft_step(d: f64, blur: f64) -> f64 {
    if blur <= 0.0 {
        return if d >= 0.0 { 1.0 } else { 0.0 };
    }
    1.0 / (1.0 + (-d / blur).exp())
}

/// Disk of luminance `inside` on a uniform `outside` ground, with a soft edge
/// of width [`EDGE_BLUR`].
pub fn render_disk(w: usize, h: usize, cx: f64, cy: f64, r: f64, inside: f64, outside: f64) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| {
        let rho = (x as f64 - cx).hypot(y as f64 - cy);
        outside + (inside - outside) * soft_step(r - rho, EDGE_BLUR)
    })
    .expect("finite")
}

/// Parameters of a rendered eye crop.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeSpec {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub iris: f64,
    /// Sclera luminance at the left and right crop edges (linear ramp).
    pub sclera: (f64, f64),
    pub lid: f64,
    /// Fraction of the iris diameter hidden by the upper lid.
    pub occlusion: f64,
    pub noise_sigma: f64,
    /// Width of the soft edges.
    pub blur: f64,
    pub seed: u64,
}

impl Default for EyeSpec {
    fn default() -> Self {
        Self {
            cx: 24.0,
            cy: 24.0,
            radius: 8.0,
            iris: 0.18,
            sclera: (0.78, 0.92),
            lid: 0.55,
            occlusion: 0.25,
            noise_sigma: 0.0,
            blur: EDGE_BLUR,
            seed: 0,
        }
    }
}

/// Dark iris disk on a graded sclera, with the top `occlusion` of the disk
/// covered by a flat upper lid, plus optional Gaussian noise.
pub fn render_eye(w: usize, h: usize, spec: &EyeSpec) -> GrayImage {
    let lid_line = spec.cy - spec.radius + 2.0 * spec.radius * spec.occlusion;
    let span = (w.max(2) - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("valid sigma");
    GrayImage::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let sclera = spec.sclera.0 + (spec.sclera.1 - spec.sclera.0) * fx / span;
        let lid = soft_step(lid_line - fy, spec.blur);
        let rho = (fx - spec.cx).hypot(fy - spec.cy);
        let iris = (1.0 - lid) * soft_step(spec.radius - rho, spec.blur);
        let open = 1.0 - lid - iris;
        let v = lid * spec.lid + iris * spec.iris + open * sclera;
        if spec.noise_sigma > 0.0 {
            v + noise.sample(&mut rng)
        } else {
            v
        }
    })
    .expect("finite")
}

/// Smooth random texture: a sum of random plane waves evaluated analytically,
/// so that it can be sampled at any sub-pixel offset.
#[derive(Debug, Clone)]
pub struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    /// `waves` plane waves with wavelengths between 12 and 32 px.
    pub fn random(seed: u64, waves: usize) -> Self {
        Self::with_wavelengths(seed, waves, 12.0, 32.0)
    }

    pub fn with_wavelengths(seed: u64, waves: usize, shortest: f64, longest: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = waves.max(1) as f64;
        let waves = (0..waves)
            .map(|i| {
                // Orientations are stratified over the half circle so the
                // texture has structure in every direction.
                let theta = (i as f64 + rng.random::<f64>()) * std::f64::consts::PI / n;
                let wavelength = shortest + (longest - shortest) * rng.random::<f64>();
                let k = std::f64::consts::TAU / wavelength;
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                let amp = 0.5 + rng.random::<f64>();
                (k * theta.cos(), k * theta.sin(), phase, amp)
            })
            .collect::<Vec<_>>();
        Self { waves }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let norm: f64 = self.waves.iter().map(|w| w.3).sum();
        0.5 + 0.4 * self.waves.iter().map(|&(kx, ky, p, a)| a * (kx * x + ky * y + p).sin()).sum::<f64>() / norm
    }

    /// Renders the texture translated by `(dx, dy)`: pixel `(x, y)` shows the
    /// texture at `(x - dx, y - dy)`.
    pub fn render(&self, w: usize, h: usize, dx: f64, dy: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| self.eval(x as f64 - dx, y as f64 - dy)).expect("finite")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_area_matches_blurred_disk() {
        // A radially symmetric blur of variance v adds pi * v to the area.
        let img = render_disk(40, 40, 19.7, 20.2, 9.0, 1.0, 0.0);
        let pi = std::f64::consts::PI;
        let var = EDGE_BLUR * EDGE_BLUR * pi * pi / 3.0;
        let area = img.sum();
        assert!((area - pi * (81.0 + var)).abs() < 0.05, "{area}");
    }

    #[test]
    fn eye_noise_is_seeded() {
        let spec = EyeSpec {
            noise_sigma: 0.02,
            seed: 5,
            ..EyeSpec::default()
        };
        assert_eq!(render_eye(30, 30, &spec), render_eye(30, 30, &spec));
        let other = EyeSpec { seed: 6, ..spec.clone() };
        assert_ne!(render_eye(30, 30, &spec), render_eye(30, 30, &other));
    }

    #[test]
    fn lid_covers_top_of_iris() {
        let spec = EyeSpec::default();
        let img = render_eye(48, 48, &spec);
        // Just inside the top of the disk is lid, the centre is iris.
        assert!((img.get(24, 16) - spec.lid).abs() < 1e-3);
        assert!((img.get(24, 25) - spec.iris).abs() < 1e-3);
    }
}
