//! Real-valued grayscale rasters, clamp-to-edge convolution and the
//! Gaussian derivative stack used by the isophote locator.

use crate::error::{Error, Result};

/// Row-major luminance raster. Samples are finite reals, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    /// Wraps 8-bit luminance, scaling to `[0, 1]`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.samples[y * self.width + x] = v;
    }

    #[inline]
    pub(crate) fn add(&mut self, x: usize, y: usize, v: f64) {
        self.samples[y * self.width + x] += v;
    }

    /// Sample with clamp-to-edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Bilinear interpolation at a sub-pixel position. Returns `None` when the
    /// 2x2 neighbourhood is not fully inside the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        if x0 >= self.width || y0 >= self.height {
            return None;
        }
        // Exact hits on the last row/column need no right/bottom neighbour.
        let x1 = if fx == 0.0 { x0 } else { x0 + 1 };
        let y1 = if fy == 0.0 { y0 } else { y0 + 1 };
        if x1 >= self.width || y1 >= self.height {
            return None;
        }
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Copies out a `w x h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        GrayImage::from_fn(w, h, |cx, cy| self.get(x + cx, y + cy))
    }

    /// Per-sample map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GrayImage> {
        GrayImage::new(self.width, self.height, self.samples.iter().map(|&v| f(v)).collect())
    }

    /// Row-major first maximum.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let mut best = 0;
        for (i, &v) in self.samples.iter().enumerate() {
            if v > self.samples[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width, self.samples[best])
    }

    pub fn sum(&self) -> f64 {
        self.samples.iter().sum()
    }
}

/// Dense 2D stencil with odd side lengths, centred on its middle sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel sides must be odd, got {width}x{height}"
            )));
        }
        if weights.len() != width * height {
            return Err(Error::invalid("kernel weight count does not match its size"));
        }
        Ok(Self {
            width,
            height,
            weights,
        })
    }

    /// Outer product `column * row`.
    pub fn separable(row: &[f64], column: &[f64]) -> Result<Self> {
        let mut weights = Vec::with_capacity(row.len() * column.len());
        for cy in column {
            for rx in row {
                weights.push(cy * rx);
            }
        }
        Self::new(row.len(), column.len(), weights)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}

/// True 2D convolution (kernel flipped) with clamp-to-edge borders.
pub fn convolve(img: &GrayImage, kernel: &Kernel) -> Result<GrayImage> {
    if kernel.width > img.width || kernel.height > img.height {
        return Err(Error::invalid(format!(
            "kernel {}x{} larger than image {}x{}",
            kernel.width, kernel.height, img.width, img.height
        )));
    }
    let rx = (kernel.width / 2) as isize;
    let ry = (kernel.height / 2) as isize;
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let mut acc = 0.0;
        for j in -ry..=ry {
            for i in -rx..=rx {
                let w = kernel.weight((i + rx) as usize, (j + ry) as usize);
                acc += w * img.get_clamped(x as isize - i, y as isize - j);
            }
        }
        acc
    })
}

/// Separable convolution: `row` along x, then `column` along y. Identical to
/// [`convolve`] with the outer-product kernel, including the border policy.
pub(crate) fn convolve_separable(img: &GrayImage, row: &[f64], column: &[f64]) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let rx = (row.len() / 2) as isize;
    let ry = (column.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kw) in row.iter().enumerate() {
                let off = k as isize - rx;
                acc += kw * img.get_clamped(x as isize - off, y as isize);
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kw) in column.iter().enumerate() {
                let off = k as isize - ry;
                let sy = (y as isize - off).clamp(0, h as isize - 1) as usize;
                acc += kw * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    GrayImage {
        width: w,
        height: h,
        samples: out,
    }
}

/// Support radius used for a Gaussian of scale `sigma`.
pub fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Sampled 1D Gaussian and its first two derivatives, truncated at
/// `ceil(3 sigma)`.
///
/// Normalisation makes the kernels exact on low-order polynomials: the
/// smoother sums to one, the first derivative returns slope 1 on a unit ramp
/// and the second derivative returns 2 on `x^2` (and 0 on constants).
#[derive(Debug, Clone)]
pub struct GaussianKernels {
    pub sigma: f64,
    pub smooth: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl GaussianKernels {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let r = kernel_radius(sigma) as isize;
        let s2 = sigma * sigma;
        let offsets: Vec<f64> = (-r..=r).map(|i| i as f64).collect();
        let g: Vec<f64> = offsets.iter().map(|&i| (-i * i / (2.0 * s2)).exp()).collect();
        let gsum: f64 = g.iter().sum();
        let smooth: Vec<f64> = g.iter().map(|v| v / gsum).collect();

        // Convolution evaluates sum_k d1[k] * f(x - i_k); on f = x this is
        // -sum_k i_k d1[k], which we scale to 1.
        let mut d1: Vec<f64> = offsets.iter().zip(&smooth).map(|(&i, &g)| -i * g / s2).collect();
        let slope: f64 = -offsets.iter().zip(&d1).map(|(&i, &d)| i * d).sum::<f64>();
        d1.iter_mut().for_each(|d| *d /= slope);

        let mut d2: Vec<f64> = offsets
            .iter()
            .zip(&smooth)
            .map(|(&i, &g)| (i * i / (s2 * s2) - 1.0 / s2) * g)
            .collect();
        // Remove the DC response with a Gaussian-shaped correction so the
        // kernel keeps its decay at the tails.
        let dc: f64 = d2.iter().sum();
        d2.iter_mut().zip(&smooth).for_each(|(d, g)| *d -= dc * g);
        let curvature: f64 = offsets.iter().zip(&d2).map(|(&i, &d)| i * i * d).sum();
        d2.iter_mut().for_each(|d| *d *= 2.0 / curvature);

        Ok(Self {
            sigma,
            smooth,
            d1,
            d2,
        })
    }

    pub fn radius(&self) -> usize {
        self.smooth.len() / 2
    }
}

/// Gaussian-smoothed first and second derivatives of a luminance image.
#[derive(Debug, Clone)]
pub struct DerivativeStack {
    pub lx: GrayImage,
    pub ly: GrayImage,
    pub lxx: GrayImage,
    pub lxy: GrayImage,
    pub lyy: GrayImage,
    pub sigma: f64,
}

impl DerivativeStack {
    pub fn width(&self) -> usize {
        self.lx.width
    }

    pub fn height(&self) -> usize {
        self.lx.height
    }
}

/// Convolves `img` with the five Gaussian derivative kernels at scale `sigma`.
///
/// Requires an image of at least 5x5 whose sides exceed the kernel radius.
pub fn derivative_stack(img: &GrayImage, sigma: f64) -> Result<DerivativeStack> {
    let k = GaussianKernels::new(sigma)?;
    let r = k.radius();
    if img.width < 5 || img.height < 5 {
        return Err(Error::invalid(format!(
            "derivative stack needs at least 5x5, got {}x{}",
            img.width, img.height
        )));
    }
    if r >= img.width || r >= img.height {
        return Err(Error::invalid(format!(
            "image {}x{} too small for kernel radius {r} (sigma {sigma})",
            img.width, img.height
        )));
    }
    Ok(DerivativeStack {
        lx: convolve_separable(img, &k.d1, &k.smooth),
        ly: convolve_separable(img, &k.smooth, &k.d1),
        lxx: convolve_separable(img, &k.d2, &k.smooth),
        lxy: convolve_separable(img, &k.d1, &k.d1),
        lyy: convolve_separable(img, &k.smooth, &k.d2),
        sigma,
    })
}

/// Gaussian smoothing with the normalised, truncated kernel at `sigma`.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let k = GaussianKernels::new(sigma)?;
    Ok(convolve_separable(img, &k.smooth, &k.smooth))
}
