//! Error metrics and image combination.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fft::ifft2c_planes;
use crate::kspace::KSpaceGrid;

pub const DEFAULT_ESP_BINS: usize = 32;

fn check_pairs(est: [&KSpaceGrid; 2], gold: [&KSpaceGrid; 2]) -> Result<()> {
    for g in est.iter().chain(&gold[1..]) {
        if !g.same_shape(gold[0]) {
            return Err(Error::Shape(format!(
                "grid {:?} does not match gold {:?}",
                g.dims(),
                gold[0].dims()
            )));
        }
    }
    Ok(())
}

fn sq_diff(a: &KSpaceGrid, b: &KSpaceGrid) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum()
}

/// `sqrt(‖k̂⁺ − g⁺‖² + ‖k̂⁻ − g⁻‖²) / sqrt(‖g⁺‖² + ‖g⁻‖²)`.
pub fn nrmse(
    est_pos: &KSpaceGrid,
    est_neg: &KSpaceGrid,
    gold_pos: &KSpaceGrid,
    gold_neg: &KSpaceGrid,
) -> Result<f64> {
    check_pairs([est_pos, est_neg], [gold_pos, gold_neg])?;
    let den = gold_pos.energy() + gold_neg.energy();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("gold data has zero energy".into()));
    }
    let num = sq_diff(est_pos, gold_pos) + sq_diff(est_neg, gold_neg);
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EspBin {
    /// Radius range `[lo, hi)` in cycles per field of view (the last bin is
    /// closed).
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub error_energy: f64,
    pub gold_energy: f64,
}

impl EspBin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `None` when the bin holds no gold energy.
    pub fn value(&self) -> Option<f64> {
        (self.gold_energy > 0.0).then(|| (self.error_energy / self.gold_energy).sqrt())
    }
}

/// Error spectrum: normalised error per annulus of k-space radius.
#[derive(Debug, Clone, PartialEq)]
pub struct EspCurve {
    pub bins: Vec<EspBin>,
}

impl EspCurve {
    /// Bins with gold energy, as `(centre radius, value, sample count)`.
    pub fn present(&self) -> Vec<(f64, f64, usize)> {
        self.bins
            .iter()
            .filter_map(|b| b.value().map(|v| (b.center(), v, b.count)))
            .collect()
    }

    /// Ratio of summed error energy to summed gold energy over all bins,
    /// square-rooted; equals the NRMSE of the same grids.
    pub fn aggregate(&self) -> f64 {
        let num: f64 = self.bins.iter().map(|b| b.error_energy).sum();
        let den: f64 = self.bins.iter().map(|b| b.gold_energy).sum();
        (num / den).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,value,count\n");
        for (r, v, c) in self.present() {
            out.push_str(&format!("{r:.16e},{v:.16e},{c}\n"));
        }
        out
    }
}

/// Annular error spectrum over both polarities and all channels, with
/// `n_bins` uniform bins over `[0, max radius]` measured from DC.
pub fn esp(
    est_pos: &KSpaceGrid,
    est_neg: &KSpaceGrid,
    gold_pos: &KSpaceGrid,
    gold_neg: &KSpaceGrid,
    n_bins: usize,
) -> Result<EspCurve> {
    check_pairs([est_pos, est_neg], [gold_pos, gold_neg])?;
    if n_bins < 2 {
        return Err(Error::Parameter(format!(
            "ESP needs at least 2 bins, got {n_bins}"
        )));
    }
    let (n_ch, ny, nx) = gold_pos.dims();
    let radius = |y: usize, x: usize| {
        let dy = y as f64 - (ny / 2) as f64;
        let dx = x as f64 - (nx / 2) as f64;
        (dy * dy + dx * dx).sqrt()
    };
    let max_r = [(0, 0), (0, nx - 1), (ny - 1, 0), (ny - 1, nx - 1)]
        .iter()
        .map(|&(y, x)| radius(y, x))
        .fold(0.0f64, f64::max);
    let width = if max_r > 0.0 {
        max_r / n_bins as f64
    } else {
        1.0
    };
    let mut bins: Vec<EspBin> = (0..n_bins)
        .map(|b| EspBin {
            lo: b as f64 * width,
            hi: if b + 1 == n_bins {
                max_r
            } else {
                (b + 1) as f64 * width
            },
            count: 0,
            error_energy: 0.0,
            gold_energy: 0.0,
        })
        .collect();
    for y in 0..ny {
        for x in 0..nx {
            let b = ((radius(y, x) / width) as usize).min(n_bins - 1);
            let bin = &mut bins[b];
            for (est, gold) in [(est_pos, gold_pos), (est_neg, gold_neg)] {
                for c in 0..n_ch {
                    let g = gold.get(c, y, x);
                    bin.error_energy += (est.get(c, y, x) - g).norm_sqr();
                    bin.gold_energy += g.norm_sqr();
                    bin.count += 1;
                }
            }
        }
    }
    Ok(EspCurve { bins })
}

/// Real-valued image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub ny: usize,
    pub nx: usize,
    pub data: Vec<f64>,
}

impl Image {
    /// 16-bit binary PGM scaled so the maximum maps to 65535.
    pub fn to_pgm(&self) -> Vec<u8> {
        let top = self.data.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut out = format!("P5\n{} {}\n65535\n", self.nx, self.ny).into_bytes();
        for &v in &self.data {
            let q = if top > 0.0 {
                (v / top * 65535.0).round() as u16
            } else {
                0
            };
            out.extend_from_slice(&q.to_be_bytes());
        }
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Square-root sum of squares over every channel of every grid, in image
/// space.
pub fn ssos(grids: &[&KSpaceGrid]) -> Result<Image> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Parameter("no grids to combine".into()))?;
    let (_, ny, nx) = first.dims();
    let mut acc = vec![0.0; ny * nx];
    for g in grids {
        if g.ny() != ny || g.nx() != nx {
            return Err(Error::Shape(format!(
                "grid {:?} does not match {:?}",
                g.dims(),
                first.dims()
            )));
        }
        let mut img = g.data().to_vec();
        ifft2c_planes(&mut img, ny, nx);
        for plane in img.chunks_exact(ny * nx) {
            for (a, z) in acc.iter_mut().zip(plane) {
                *a += z.norm_sqr();
            }
        }
    }
    Ok(Image {
        ny,
        nx,
        data: acc.into_iter().map(f64::sqrt).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::fft2c_planes;
    use crate::kspace::Polarity;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, n_ch: usize, ny: usize, nx: usize) -> KSpaceGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n_ch * ny * nx)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        KSpaceGrid::from_data(n_ch, ny, nx, Polarity::None, data).unwrap()
    }

    #[test]
    fn nrmse_examples() {
        let (g1, g2) = (random(1, 2, 8, 6), random(2, 2, 8, 6));
        assert_eq!(nrmse(&g1, &g2, &g1, &g2).unwrap(), 0.0);
        let z = KSpaceGrid::zeros(2, 8, 6, Polarity::None);
        assert!((nrmse(&z, &z, &g1, &g2).unwrap() - 1.0).abs() < 1e-15);
        let two = Complex64::new(2.0, 0.0);
        assert!((nrmse(&g1.scaled(two), &g2.scaled(two), &g1, &g2).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            nrmse(&g1, &g2, &z, &z),
            Err(Error::UndefinedMetric(_))
        ));
        let small = KSpaceGrid::zeros(2, 6, 6, Polarity::None);
        assert!(matches!(nrmse(&small, &g2, &g1, &g2), Err(Error::Shape(_))));
    }

    #[test]
    fn esp_examples() {
        let (g1, g2) = (random(3, 2, 16, 16), random(4, 2, 16, 16));
        let same = esp(&g1, &g2, &g1, &g2, 8).unwrap();
        assert!(same.present().iter().all(|&(_, v, _)| v == 0.0));
        let z = KSpaceGrid::zeros(2, 16, 16, Polarity::None);
        let zero = esp(&z, &z, &g1, &g2, 8).unwrap();
        assert!(zero
            .present()
            .iter()
            .all(|&(_, v, _)| (v - 1.0).abs() < 1e-14));
        let total: usize = zero.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, 2 * 2 * 16 * 16);
        assert!(esp(&g1, &g2, &g1, &g2, 1).is_err());
    }

    #[test]
    fn esp_localises_high_frequency_error() {
        let (g1, g2) = (random(5, 1, 16, 16), random(6, 1, 16, 16));
        let mut data = g1.data().to_vec();
        for y in 0..16 {
            for x in 0..16 {
                let r = ((y as f64 - 8.0).powi(2) + (x as f64 - 8.0).powi(2)).sqrt();
                if r > 8.0 {
                    data[y * 16 + x] += Complex64::new(0.3, -0.2);
                }
            }
        }
        let est = KSpaceGrid::from_data(1, 16, 16, Polarity::None, data).unwrap();
        let curve = esp(&est, &g2, &g1, &g2, 8).unwrap();
        let max_r = (2.0f64 * 64.0).sqrt();
        for b in &curve.bins {
            if b.hi <= 8.0 {
                assert_eq!(b.value(), Some(0.0));
            }
            if b.lo > 8.0 && b.hi <= max_r {
                assert!(b.value().unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn esp_aggregates_to_nrmse() {
        let (g1, g2) = (random(7, 3, 12, 10), random(8, 3, 12, 10));
        let (e1, e2) = (random(9, 3, 12, 10), random(10, 3, 12, 10));
        let curve = esp(&e1, &e2, &g1, &g2, DEFAULT_ESP_BINS).unwrap();
        let n = nrmse(&e1, &e2, &g1, &g2).unwrap();
        assert!((curve.aggregate() - n).abs() < 1e-10 * n);
    }

    #[test]
    fn ssos_examples() {
        let (ny, nx) = (6, 8);
        let mut img: Vec<Complex64> = (0..ny * nx)
            .map(|i| Complex64::from_polar(1.0 + i as f64 * 0.1, i as f64))
            .collect();
        let mags: Vec<f64> = img.iter().map(|z| z.norm()).collect();
        fft2c_planes(&mut img, ny, nx);
        let g = KSpaceGrid::from_data(1, ny, nx, Polarity::None, img).unwrap();
        let one = ssos(&[&g]).unwrap();
        for (a, b) in one.data.iter().zip(&mags) {
            assert!((a - b).abs() < 1e-12);
        }
        let two = ssos(&[&g, &g]).unwrap();
        for (a, b) in two.data.iter().zip(&one.data) {
            assert!((a - b * 2f64.sqrt()).abs() < 1e-12);
        }
        let rotated = g.scaled(Complex64::from_polar(1.0, 0.8));
        let r = ssos(&[&rotated]).unwrap();
        for (a, b) in r.data.iter().zip(&one.data) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(ssos(&[]).is_err());
    }

    #[test]
    fn pgm_layout() {
        let img = Image {
            ny: 1,
            nx: 2,
            data: vec![0.5, 1.0],
        };
        let bytes = img.to_pgm();
        let header = b"P5\n2 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0x80, 0x00, 0xff, 0xff]);
    }
}
