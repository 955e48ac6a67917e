//! Eye-centre location by isophote curvature voting.
//!
//! Every pixel on a curved isophote points, through its displacement vector,
//! at the centre of the osculating circle. Pixels whose curvature is negative
//! (darker inside than outside) vote for that centre with a weight equal to
//! their curvedness; the accumulator is blurred and its mode refined by mean
//! shift.

use crate::error::{Error, Result};
use crate::imgproc::{derivative_stack, gaussian_blur, DerivativeStack, GrayImage};

/// Tuning for the isophote locator. All values are in pixels except the two
/// guards, which are in normalised luminance units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsophoteParams {
    /// Scale of the Gaussian derivatives.
    pub sigma: f64,
    /// Blur applied to the vote accumulator.
    pub sigma_acc: f64,
    /// Side of the square mean-shift window.
    pub window: usize,
    /// Minimum gradient magnitude for a pixel to vote.
    pub eps_grad: f64,
    /// Minimum |Ly^2 Lxx - 2 Lx Lxy Ly + Lx^2 Lyy| for a pixel to vote.
    pub eps_den: f64,
}

impl Default for IsophoteParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            sigma_acc: 1.5,
            window: 15,
            eps_grad: 1e-4,
            eps_den: 1e-6,
        }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    pub fn whole(img: &GrayImage) -> Self {
        Self::new(0, 0, img.width(), img.height())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + (self.width as f64 - 1.0) / 2.0,
            self.y as f64 + (self.height as f64 - 1.0) / 2.0,
        )
    }
}

impl std::str::FromStr for Roi {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad roi `{s}`: {e}")))?;
        match parts.as_slice() {
            [x, y, w, h] => Ok(Roi::new(*x, *y, *w, *h)),
            _ => Err(Error::invalid(format!("roi must be x,y,w,h, got `{s}`"))),
        }
    }
}

/// Vote accumulator with the dimensions of the source image.
#[derive(Debug, Clone)]
pub struct CenterMap {
    pub votes: GrayImage,
}

impl CenterMap {
    pub fn width(&self) -> usize {
        self.votes.width()
    }

    pub fn height(&self) -> usize {
        self.votes.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PupilEstimate {
    pub x: f64,
    pub y: f64,
    /// Vote density at the estimate.
    pub confidence: f64,
}

/// Numerator of the isophote curvature, `Ly^2 Lxx - 2 Lx Lxy Ly + Lx^2 Lyy`.
#[inline]
fn curvature_numerator(lx: f64, ly: f64, lxx: f64, lxy: f64, lyy: f64) -> f64 {
    ly * ly * lxx - 2.0 * lx * lxy * ly + lx * lx * lyy
}

pub fn isophote_curvature(stack: &DerivativeStack) -> GrayImage {
    isophote_curvature_with(stack, IsophoteParams::default().eps_grad)
}

pub fn isophote_curvature_with(stack: &DerivativeStack, eps_grad: f64) -> GrayImage {
    let (w, h) = (stack.width(), stack.height());
    GrayImage::from_fn(w, h, |x, y| {
        let (lx, ly) = (stack.lx.get(x, y), stack.ly.get(x, y));
        let g2 = lx * lx + ly * ly;
        if g2.sqrt() < eps_grad {
            return 0.0;
        }
        let num = curvature_numerator(lx, ly, stack.lxx.get(x, y), stack.lxy.get(x, y), stack.lyy.get(x, y));
        -num / g2.powf(1.5)
    })
    .expect("stack planes are finite")
}

/// Per-pixel displacement `D = -(Lx, Ly)(Lx^2 + Ly^2) / num` towards the
/// estimated isophote centre; non-voting pixels get the zero vector.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl DisplacementField {
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }
}

pub fn displacement_field(stack: &DerivativeStack) -> DisplacementField {
    displacement_field_with(stack, &IsophoteParams::default())
}

pub fn displacement_field_with(stack: &DerivativeStack, params: &IsophoteParams) -> DisplacementField {
    let (w, h) = (stack.width(), stack.height());
    let mut dx = vec![0.0; w * h];
    let mut dy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (lx, ly) = (stack.lx.get(x, y), stack.ly.get(x, y));
            let g2 = lx * lx + ly * ly;
            let num = curvature_numerator(lx, ly, stack.lxx.get(x, y), stack.lxy.get(x, y), stack.lyy.get(x, y));
            if g2.sqrt() < params.eps_grad || num.abs() < params.eps_den {
                continue;
            }
            dx[y * w + x] = -lx * g2 / num;
            dy[y * w + x] = -ly * g2 / num;
        }
    }
    DisplacementField {
        width: w,
        height: h,
        dx,
        dy,
    }
}

/// `sqrt(Lxx^2 + 2 Lxy^2 + Lyy^2)`.
pub fn curvedness(stack: &DerivativeStack) -> GrayImage {
    GrayImage::from_fn(stack.width(), stack.height(), |x, y| {
        let (a, b, c) = (stack.lxx.get(x, y), stack.lxy.get(x, y), stack.lyy.get(x, y));
        (a * a + 2.0 * b * b + c * c).sqrt()
    })
    .expect("stack planes are finite")
}

/// Raw (unblurred) accumulator: each pixel with negative curvature and a
/// valid displacement adds its curvedness at the pixel nearest `pos + D`.
/// Votes landing outside the image are dropped.
pub fn cast_votes(stack: &DerivativeStack, params: &IsophoteParams) -> GrayImage {
    let (w, h) = (stack.width(), stack.height());
    let kappa = isophote_curvature_with(stack, params.eps_grad);
    let field = displacement_field_with(stack, params);
    let weight = curvedness(stack);
    let mut acc = GrayImage::filled(w, h, 0.0).expect("non-empty");
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = field.get(x, y);
            // Bright-centre isophotes have positive curvature.
            if kappa.get(x, y) >= 0.0 || (dx == 0.0 && dy == 0.0) {
                continue;
            }
            let tx = (x as f64 + dx).round();
            let ty = (y as f64 + dy).round();
            if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                continue;
            }
            acc.add(tx as usize, ty as usize, weight.get(x, y));
        }
    }
    acc
}

pub fn accumulate_centermap(stack: &DerivativeStack, sigma_acc: f64) -> Result<CenterMap> {
    let params = IsophoteParams {
        sigma_acc,
        ..IsophoteParams::default()
    };
    accumulate_centermap_with(stack, &params)
}

pub fn accumulate_centermap_with(stack: &DerivativeStack, params: &IsophoteParams) -> Result<CenterMap> {
    let raw = cast_votes(stack, params);
    let votes = if params.sigma_acc > 0.0 {
        gaussian_blur(&raw, params.sigma_acc)?
    } else {
        raw
    };
    Ok(CenterMap { votes })
}

const SHIFT_TOL: f64 = 0.1;
const MAX_SHIFT_ITERS: usize = 20;

/// Mean shift with a flat square window of side `window`, started at `seed`.
/// Stops when the shift drops below 0.1 px or after 20 iterations.
pub fn mean_shift_refine(map: &CenterMap, seed: (f64, f64), window: usize) -> Result<PupilEstimate> {
    let (w, h) = (map.width() as f64, map.height() as f64);
    if !(seed.0 >= 0.0 && seed.1 >= 0.0 && seed.0 <= w - 1.0 && seed.1 <= h - 1.0) {
        return Err(Error::invalid(format!("mean-shift seed {seed:?} outside {w}x{h} map")));
    }
    if window < 3 {
        return Err(Error::invalid(format!("mean-shift window must be >= 3, got {window}")));
    }
    let half = window as f64 / 2.0;
    let mut pos = seed;
    for _ in 0..MAX_SHIFT_ITERS {
        let Some(next) = window_centroid(&map.votes, pos, half) else {
            return Ok(PupilEstimate {
                x: seed.0,
                y: seed.1,
                confidence: 0.0,
            });
        };
        let shift = ((next.0 - pos.0).powi(2) + (next.1 - pos.1).powi(2)).sqrt();
        pos = next;
        if shift < SHIFT_TOL {
            break;
        }
    }
    let confidence = map.votes.sample_bilinear(pos.0, pos.1).unwrap_or_else(|| {
        map.votes
            .get_clamped(pos.0.round() as isize, pos.1.round() as isize)
    });
    Ok(PupilEstimate {
        x: pos.0,
        y: pos.1,
        confidence: confidence.max(0.0),
    })
}

fn window_centroid(votes: &GrayImage, c: (f64, f64), half: f64) -> Option<(f64, f64)> {
    let x0 = (c.0 - half).ceil().max(0.0) as usize;
    let y0 = (c.1 - half).ceil().max(0.0) as usize;
    let x1 = ((c.0 + half).floor() as usize).min(votes.width() - 1);
    let y1 = ((c.1 + half).floor() as usize).min(votes.height() - 1);
    let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let v = votes.get(x, y);
            m += v;
            mx += v * x as f64;
            my += v * y as f64;
        }
    }
    (m > 0.0).then(|| (mx / m, my / m))
}

/// Full locator on a region of interest: derivatives, voting, global maximum
/// inside the ROI and mean-shift refinement. Coordinates are returned in the
/// frame of `img`.
pub fn locate_eye_center(img: &GrayImage, roi: Roi) -> Result<PupilEstimate> {
    locate_eye_center_with(img, roi, &IsophoteParams::default())
}

pub fn locate_eye_center_with(img: &GrayImage, roi: Roi, params: &IsophoteParams) -> Result<PupilEstimate> {
    if roi.width < 16 || roi.height < 16 {
        return Err(Error::invalid(format!(
            "roi {}x{} smaller than 16x16",
            roi.width, roi.height
        )));
    }
    if roi.x + roi.width > img.width() || roi.y + roi.height > img.height() {
        return Err(Error::invalid(format!(
            "roi {}x{}+{}+{} outside image {}x{}",
            roi.width,
            roi.height,
            roi.x,
            roi.y,
            img.width(),
            img.height()
        )));
    }
    let crop = img.crop(roi.x, roi.y, roi.width, roi.height)?;
    let stack = derivative_stack(&crop, params.sigma)?;
    let map = accumulate_centermap_with(&stack, params)?;
    let (mx, my, peak) = map.votes.argmax();
    if peak <= 0.0 {
        let (cx, cy) = roi.center();
        return Ok(PupilEstimate {
            x: cx,
            y: cy,
            confidence: 0.0,
        });
    }
    let est = mean_shift_refine(&map, (mx as f64, my as f64), params.window)?;
    Ok(PupilEstimate {
        x: est.x + roi.x as f64,
        y: est.y + roi.y as f64,
        confidence: est.confidence,
    })
}
