//! Initial density estimate: Gaussian kernel smoothing on the grid.
//!
//! The smoother is a separable discrete Gaussian blur with the kernel
//! truncated at four standard deviations. At the grid edges the kernel is
//! renormalized over the in-bounds window (no reflection, no wraparound) and
//! the result is renormalized to unit mass, so the output is always a proper
//! density without inventing mass outside the bounds.

use crate::error::{Error, Result};
use crate::grid::GridDensity;

/// Kernel standard deviations in cell units; `None` selects Silverman's rule
/// from the sample statistics at fit time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KdeConfig {
    pub bandwidth_x: Option<f64>,
    pub bandwidth_y: Option<f64>,
}

impl KdeConfig {
    pub fn auto() -> KdeConfig {
        KdeConfig::default()
    }

    pub fn fixed(bandwidth: f64) -> KdeConfig {
        KdeConfig {
            bandwidth_x: Some(bandwidth),
            bandwidth_y: Some(bandwidth),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, bw) in [("x", self.bandwidth_x), ("y", self.bandwidth_y)] {
            if let Some(b) = bw {
                // zero is allowed and means "no smoothing"
                if !b.is_finite() || b < 0.0 {
                    return Err(Error::Argument(format!(
                        "bandwidth_{axis} must be finite and >= 0, got {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolve per-axis bandwidths, falling back to
    /// [`auto_bandwidth`] where unset.
    pub fn resolve(&self, count: usize, spread_x: f64, spread_y: f64) -> Result<(f64, f64)> {
        self.validate()?;
        match (self.bandwidth_x, self.bandwidth_y) {
            (Some(x), Some(y)) => Ok((x, y)),
            _ => {
                let (ax, ay) = auto_bandwidth(count, spread_x, spread_y)?;
                Ok((
                    self.bandwidth_x.unwrap_or(ax),
                    self.bandwidth_y.unwrap_or(ay),
                ))
            }
        }
    }
}

/// Silverman's rule per axis, `1.06 * spread * count^(-1/5)`, floored at half
/// a cell so the kernel never degenerates on near-discrete data.
pub fn auto_bandwidth(count: usize, spread_x: f64, spread_y: f64) -> Result<(f64, f64)> {
    if count < 2 {
        return Err(Error::Argument(format!(
            "bandwidth selection needs at least 2 points, got {count}"
        )));
    }
    if !(spread_x.is_finite() && spread_y.is_finite()) || spread_x < 0.0 || spread_y < 0.0 {
        return Err(Error::Argument(
            "spreads must be finite and non-negative".into(),
        ));
    }
    let factor = 1.06 * (count as f64).powf(-0.2);
    Ok(((factor * spread_x).max(0.5), (factor * spread_y).max(0.5)))
}

/// Smooth a normalized histogram with a separable truncated Gaussian,
/// renormalizing to restore unit mass. Bandwidths are in cell units; a zero
/// bandwidth on both axes returns the input unchanged.
pub fn gaussian_kde(y: &GridDensity, bandwidth_x: f64, bandwidth_y: f64) -> Result<GridDensity> {
    for (axis, b) in [("x", bandwidth_x), ("y", bandwidth_y)] {
        if !b.is_finite() || b < 0.0 {
            return Err(Error::Argument(format!(
                "bandwidth_{axis} must be finite and >= 0, got {b}"
            )));
        }
    }
    if !y.is_normalized(1e-6) {
        return Err(Error::Argument(format!(
            "kde input must be normalized, sum is {}",
            y.sum()
        )));
    }
    let spec = *y.spec();
    let side = spec.side() as usize;
    let kx = kernel(bandwidth_x);
    let ky = kernel(bandwidth_y);

    // rows (x axis), then columns (y axis), zero padding at the edges
    let mut pass1 = vec![0.0; side * side];
    for row in 0..side {
        convolve_line(
            &y.values()[row * side..(row + 1) * side],
            &kx,
            &mut pass1[row * side..],
        );
    }
    let mut pass2 = vec![0.0; side * side];
    let mut column = vec![0.0; side];
    let mut out_col = vec![0.0; side];
    for col in 0..side {
        for row in 0..side {
            column[row] = pass1[row * side + col];
        }
        convolve_line(&column, &ky, &mut out_col);
        for row in 0..side {
            pass2[row * side + col] = out_col[row];
        }
    }

    let total: f64 = pass2.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("smoothed density has no mass".into()));
    }
    for v in &mut pass2 {
        *v /= total;
        // convolution round-off can leave -0.0 style dust
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    GridDensity::new(spec, pass2)
}

/// Half-kernel of Gaussian weights out to 4 sigma, normalized to sum 1 over
/// the full symmetric window. Zero sigma yields the identity kernel.
fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    if radius == 0 {
        return vec![1.0];
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let half: Vec<f64> = (0..=radius)
        .map(|t| (-((t * t) as f64) * inv).exp())
        .collect();
    let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    half.into_iter().map(|w| w / total).collect()
}

/// 1-D pass with the kernel renormalized over the in-bounds window, so a
/// constant line maps to itself for any bandwidth.
fn convolve_line(input: &[f64], half_kernel: &[f64], out: &mut [f64]) {
    let n = input.len();
    let radius = half_kernel.len() - 1;
    for (i, o) in out.iter_mut().take(n).enumerate() {
        let mut acc = input[i] * half_kernel[0];
        let mut window = half_kernel[0];
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        for j in lo..i {
            acc += input[j] * half_kernel[i - j];
            window += half_kernel[i - j];
        }
        for j in i + 1..=hi {
            acc += input[j] * half_kernel[j - i];
            window += half_kernel[j - i];
        }
        *o = acc / window;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bounds, GridSpec};

    fn unit_spec(k: u8) -> GridSpec {
        GridSpec::new(k, Bounds::new(0.0, 1.0, 0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_bandwidth_is_identity() {
        let spec = unit_spec(2);
        let mut v = vec![0.0; 16];
        v[5] = 1.0;
        let y = GridDensity::new(spec, v.clone()).unwrap();
        let z = gaussian_kde(&y, 0.0, 0.0).unwrap();
        assert_eq!(z.values(), v.as_slice());
    }

    #[test]
    fn uniform_stays_uniform() {
        let spec = unit_spec(3);
        let y = GridDensity::new(spec, vec![1.0 / 64.0; 64]).unwrap();
        for bw in [0.5, 1.0, 3.0] {
            let z = gaussian_kde(&y, bw, bw).unwrap();
            for &v in z.values() {
                assert!((v - 1.0 / 64.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn rejects_unnormalized_input() {
        let spec = unit_spec(1);
        let y = GridDensity::new(spec, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            gaussian_kde(&y, 1.0, 1.0),
            Err(Error::Argument(_))
        ));
    }

    /// Brute-force 2-D truncated-Gaussian sum with the product kernel
    /// renormalized per output cell over its in-bounds window, then global
    /// renormalization. Independent of the separable implementation.
    fn brute_kde(y: &GridDensity, bx: f64, by: f64) -> Vec<f64> {
        let side = y.spec().side() as i64;
        let rx = (4.0 * bx).ceil() as i64;
        let ry = (4.0 * by).ceil() as i64;
        let kx = |d: i64| (-((d * d) as f64) / (2.0 * bx * bx)).exp();
        let ky = |d: i64| (-((d * d) as f64) / (2.0 * by * by)).exp();
        let mut out = vec![0.0; (side * side) as usize];
        for or in 0..side {
            for oc in 0..side {
                let mut acc = 0.0;
                let mut window = 0.0;
                for ir in (or - ry).max(0)..=(or + ry).min(side - 1) {
                    for ic in (oc - rx).max(0)..=(oc + rx).min(side - 1) {
                        let w = kx(oc - ic) * ky(or - ir);
                        acc += y.values()[(ir * side + ic) as usize] * w;
                        window += w;
                    }
                }
                out[(or * side + oc) as usize] = acc / window;
            }
        }
        let total: f64 = out.iter().sum();
        for v in &mut out {
            *v /= total;
        }
        out
    }

    #[test]
    fn separable_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for k in 2..=4u8 {
            let spec = unit_spec(k);
            let n = spec.cell_count();
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= total);
            let y = GridDensity::new(spec, v).unwrap();
            for (bx, by) in [(0.7, 0.7), (1.5, 0.9), (2.0, 2.0)] {
                let fast = gaussian_kde(&y, bx, by).unwrap();
                let slow = brute_kde(&y, bx, by);
                for (a, b) in fast.values().iter().zip(&slow) {
                    assert!((a - b).abs() <= 1e-10, "separable vs brute: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn point_mass_center_matches_brute_force() {
        let spec = unit_spec(5);
        let mut v = vec![0.0; spec.cell_count()];
        v[spec.cell_index(16, 16)] = 1.0;
        let y = GridDensity::new(spec, v).unwrap();
        let fast = gaussian_kde(&y, 2.0, 2.0).unwrap();
        let slow = brute_kde(&y, 2.0, 2.0);
        for (a, b) in fast.values().iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert!((fast.sum() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn smoothing_reduces_peaks() {
        let spec = unit_spec(4);
        for (col, row) in [(0, 0), (7, 7), (15, 3)] {
            let mut v = vec![0.0; spec.cell_count()];
            v[spec.cell_index(col, row)] = 1.0;
            let y = GridDensity::new(spec, v).unwrap();
            for bw in [0.5, 1.0, 2.5] {
                let z = gaussian_kde(&y, bw, bw).unwrap();
                let peak = z.values().iter().cloned().fold(0.0, f64::max);
                assert!(peak <= 1.0, "peak {peak} grew past input max");
                assert!(z.values().iter().all(|&v| v >= 0.0));
                assert!((z.sum() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn auto_bandwidth_formula() {
        let (bx, by) = auto_bandwidth(200_000, 8.0, 8.0).unwrap();
        let expect = 1.06 * 8.0 * (200_000f64).powf(-0.2);
        assert!((bx - expect).abs() <= 1e-12);
        assert_eq!(bx, by);

        // degenerate spread clamps to the floor
        assert_eq!(auto_bandwidth(100, 0.0, 1e-9).unwrap().0, 0.5);

        let (bx, _) = auto_bandwidth(32, 1.0, 1.0).unwrap();
        assert!((bx - 1.06 * 32f64.powf(-0.2)).abs() <= 1e-12);
        assert!((bx - 0.53).abs() <= 1e-12);

        assert!(auto_bandwidth(1, 1.0, 1.0).is_err());
    }
}
