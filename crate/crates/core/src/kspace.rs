//! Multi-channel dual-polarity k-space data model.
//!
//! Grids are stored channel-major, then phase-encode row (`ky`), then readout
//! column (`kx`). DC sits at `(ny / 2, nx / 2)`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Readout gradient polarity of a grid or of an acquired line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
    None,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
            Polarity::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pos" => Some(Polarity::Positive),
            "neg" => Some(Polarity::Negative),
            "none" => Some(Polarity::None),
            _ => None,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multi-channel Cartesian k-space array.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceGrid {
    n_ch: usize,
    ny: usize,
    nx: usize,
    polarity: Polarity,
    data: Vec<Complex64>,
}

impl KSpaceGrid {
    pub fn zeros(n_ch: usize, ny: usize, nx: usize, polarity: Polarity) -> Self {
        Self {
            n_ch,
            ny,
            nx,
            polarity,
            data: vec![Complex64::new(0.0, 0.0); n_ch * ny * nx],
        }
    }

    /// Wraps `data` laid out as `(channel, ky, kx)` row-major.
    pub fn from_data(
        n_ch: usize,
        ny: usize,
        nx: usize,
        polarity: Polarity,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if n_ch == 0 || ny == 0 || nx == 0 {
            return Err(Error::Shape(format!(
                "grid dimensions must be positive, got {n_ch}x{ny}x{nx}"
            )));
        }
        if data.len() != n_ch * ny * nx {
            return Err(Error::Shape(format!(
                "expected {} samples for {n_ch}x{ny}x{nx}, got {}",
                n_ch * ny * nx,
                data.len()
            )));
        }
        if let Some(i) = data
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Parameter(format!(
                "non-finite sample at flat index {i}"
            )));
        }
        Ok(Self {
            n_ch,
            ny,
            nx,
            polarity,
            data,
        })
    }

    pub fn n_ch(&self) -> usize {
        self.n_ch
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    /// Samples per channel.
    pub fn plane(&self) -> usize {
        self.ny * self.nx
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let plane = self.plane();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, ky: usize, kx: usize) -> Complex64 {
        self.data[(c * self.ny + ky) * self.nx + kx]
    }

    pub fn with_polarity(mut self, polarity: Polarity) -> Self {
        self.polarity = polarity;
        self
    }

    pub fn same_shape(&self, other: &KSpaceGrid) -> bool {
        self.n_ch == other.n_ch && self.ny == other.ny && self.nx == other.nx
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_ch, self.ny, self.nx)
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Copy with every sample multiplied by `s`.
    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= s);
        out
    }

    /// Copy with rows where `keep[ky]` is false set to zero.
    pub fn masked_rows(&self, keep: &[bool]) -> Self {
        assert_eq!(keep.len(), self.ny);
        let mut out = self.clone();
        for c in 0..self.n_ch {
            for (ky, &k) in keep.iter().enumerate() {
                if !k {
                    let start = (c * self.ny + ky) * self.nx;
                    out.data[start..start + self.nx].fill(Complex64::new(0.0, 0.0));
                }
            }
        }
        out
    }
}

/// Acquisition state of one phase-encode line. The discriminant is the
/// on-disk mask byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LineState {
    Unacquired = 0,
    Positive = 1,
    Negative = 2,
    /// Measured with both polarities (separate calibration-style grids).
    Both = 3,
}

impl LineState {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(LineState::Unacquired),
            1 => Some(LineState::Positive),
            2 => Some(LineState::Negative),
            3 => Some(LineState::Both),
            _ => None,
        }
    }

    pub fn is_acquired(self) -> bool {
        self != LineState::Unacquired
    }

    pub fn matches(self, polarity: Polarity) -> bool {
        matches!(
            (self, polarity),
            (LineState::Positive | LineState::Both, Polarity::Positive)
                | (LineState::Negative | LineState::Both, Polarity::Negative)
        )
    }
}

/// Partial Fourier fraction, one of 1, 7/8, 6/8 or 5/8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartialFourier {
    num: u32,
    den: u32,
}

impl PartialFourier {
    pub const FULL: Self = Self { num: 1, den: 1 };
    pub const SEVEN_EIGHTHS: Self = Self { num: 7, den: 8 };
    pub const SIX_EIGHTHS: Self = Self { num: 6, den: 8 };
    pub const FIVE_EIGHTHS: Self = Self { num: 5, den: 8 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        match (num, den) {
            (1, 1) | (8, 8) => Ok(Self::FULL),
            (n @ 5..=7, 8) => Ok(Self { num: n, den: 8 }),
            _ => Err(Error::Parameter(format!(
                "partial Fourier fraction {num}/{den} not in {{1, 7/8, 6/8, 5/8}}"
            ))),
        }
    }

    /// Accepts `1`, `7/8`, `6/8`, `5/8` or the decimal equivalents.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let num = n
                .trim()
                .parse()
                .map_err(|_| Error::Parameter(format!("bad partial Fourier numerator `{n}`")))?;
            let den = d
                .trim()
                .parse()
                .map_err(|_| Error::Parameter(format!("bad partial Fourier denominator `{d}`")))?;
            return Self::new(num, den);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::Parameter(format!("bad partial Fourier fraction `{s}`")))?;
        for pf in [
            Self::FULL,
            Self::SEVEN_EIGHTHS,
            Self::SIX_EIGHTHS,
            Self::FIVE_EIGHTHS,
        ] {
            if (pf.value() - v).abs() < 1e-12 {
                return Ok(pf);
            }
        }
        Err(Error::Parameter(format!(
            "partial Fourier fraction {s} not in {{1, 7/8, 6/8, 5/8}}"
        )))
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// First retained line: `floor((1 - pf) * ny)`.
    pub fn window_start(self, ny: usize) -> usize {
        ((self.den - self.num) as usize * ny) / self.den as usize
    }
}

impl fmt::Display for PartialFourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Per-line acquisition map for interleaved dual-polarity EPI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    lines: Vec<LineState>,
    accel: usize,
    pf: PartialFourier,
    offset: usize,
}

impl SamplingPattern {
    /// Regular interleaved pattern: positive lines are `≡ offset (mod 2R)`,
    /// negative lines `≡ offset + R (mod 2R)`, both restricted to the partial
    /// Fourier window.
    pub fn epi(ny: usize, accel: usize, pf: PartialFourier, offset: usize) -> Result<Self> {
        if ny == 0 {
            return Err(Error::Parameter("pattern needs at least one line".into()));
        }
        if accel == 0 {
            return Err(Error::Parameter("acceleration factor must be >= 1".into()));
        }
        if offset >= 2 * accel {
            return Err(Error::Parameter(format!(
                "polarity offset {offset} must lie in [0, {})",
                2 * accel
            )));
        }
        let start = pf.window_start(ny);
        let period = 2 * accel;
        let lines = (0..ny)
            .map(|ky| {
                if ky < start {
                    LineState::Unacquired
                } else if ky % period == offset {
                    LineState::Positive
                } else if ky % period == (offset + accel) % period {
                    LineState::Negative
                } else {
                    LineState::Unacquired
                }
            })
            .collect();
        Ok(Self {
            lines,
            accel,
            pf,
            offset,
        })
    }

    /// Every line acquired, alternating polarity (even lines positive).
    pub fn fully_sampled(ny: usize) -> Self {
        Self::epi(ny, 1, PartialFourier::FULL, 0).expect("valid full pattern")
    }

    /// Every line measured in both polarity grids, as when each polarity is
    /// acquired at full resolution.
    pub fn both_polarities(ny: usize) -> Self {
        Self {
            lines: vec![LineState::Both; ny.max(1)],
            accel: 1,
            pf: PartialFourier::FULL,
            offset: 0,
        }
    }

    /// Contiguous block of `count` lines centred on DC, alternating polarity.
    /// Models a low-resolution calibration prescan.
    pub fn central_block(ny: usize, count: usize) -> Result<Self> {
        if count == 0 || count > ny {
            return Err(Error::Parameter(format!(
                "central block of {count} lines does not fit in {ny}"
            )));
        }
        let start = ny / 2 - count / 2;
        let mut lines = vec![LineState::Unacquired; ny];
        for (ky, line) in lines.iter_mut().enumerate().skip(start).take(count) {
            *line = if ky % 2 == 0 {
                LineState::Positive
            } else {
                LineState::Negative
            };
        }
        Ok(Self {
            lines,
            accel: 1,
            pf: PartialFourier::FULL,
            offset: 0,
        })
    }

    /// Pattern from an explicit line map; the descriptive fields are kept as
    /// metadata and not checked against the map.
    pub fn from_lines(
        lines: Vec<LineState>,
        accel: usize,
        pf: PartialFourier,
        offset: usize,
    ) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::Parameter("pattern needs at least one line".into()));
        }
        if accel == 0 {
            return Err(Error::Parameter("acceleration factor must be >= 1".into()));
        }
        Ok(Self {
            lines,
            accel,
            pf,
            offset,
        })
    }

    pub fn ny(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[LineState] {
        &self.lines
    }

    pub fn accel(&self) -> usize {
        self.accel
    }

    pub fn pf(&self) -> PartialFourier {
        self.pf
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// True when the line map equals the regular pattern implied by
    /// `(accel, pf, offset)`.
    pub fn is_regular(&self) -> bool {
        if self.lines.iter().all(|l| *l == LineState::Both) {
            return self.accel == 1 && self.pf == PartialFourier::FULL && self.offset == 0;
        }
        Self::epi(self.ny(), self.accel, self.pf, self.offset)
            .map(|p| p.lines == self.lines)
            .unwrap_or(false)
    }

    /// Rows measured in the grid of the given polarity.
    pub fn rows_for(&self, polarity: Polarity) -> Vec<bool> {
        self.lines.iter().map(|l| l.matches(polarity)).collect()
    }

    /// Rows acquired with either polarity. Calibration grids of both
    /// polarities are measured on exactly these rows.
    pub fn acquired_rows(&self) -> Vec<bool> {
        self.lines.iter().map(|l| l.is_acquired()).collect()
    }

    pub fn count(&self, polarity: Polarity) -> usize {
        self.lines.iter().filter(|l| l.matches(polarity)).count()
    }

    pub fn is_fully_acquired(&self) -> bool {
        self.lines.iter().all(|l| l.is_acquired())
    }
}

/// Separates an interleaved EPI acquisition into full-size positive and
/// negative polarity grids; lines of the other polarity and unacquired lines
/// are zero. Lines marked [`LineState::Both`] are copied to both grids.
pub fn split_interleaved(
    raw: &KSpaceGrid,
    pattern: &SamplingPattern,
) -> Result<(KSpaceGrid, KSpaceGrid)> {
    if raw.ny() != pattern.ny() {
        return Err(Error::Shape(format!(
            "grid has {} lines but pattern has {}",
            raw.ny(),
            pattern.ny()
        )));
    }
    let pos = raw
        .masked_rows(&pattern.rows_for(Polarity::Positive))
        .with_polarity(Polarity::Positive);
    let neg = raw
        .masked_rows(&pattern.rows_for(Polarity::Negative))
        .with_polarity(Polarity::Negative);
    Ok((pos, neg))
}

/// Builds the raw interleaved acquisition from two fully sampled polarity
/// grids: each acquired line is taken from the grid of its polarity.
pub fn interleave(
    pos: &KSpaceGrid,
    neg: &KSpaceGrid,
    pattern: &SamplingPattern,
) -> Result<KSpaceGrid> {
    if !pos.same_shape(neg) {
        return Err(Error::Shape("polarity grids differ in shape".into()));
    }
    if pos.ny() != pattern.ny() {
        return Err(Error::Shape(format!(
            "grid has {} lines but pattern has {}",
            pos.ny(),
            pattern.ny()
        )));
    }
    let (n_ch, ny, nx) = pos.dims();
    let mut out = KSpaceGrid::zeros(n_ch, ny, nx, Polarity::None);
    for c in 0..n_ch {
        for (ky, line) in pattern.lines().iter().enumerate() {
            let src = match line {
                LineState::Positive => pos,
                LineState::Negative => neg,
                LineState::Unacquired => continue,
                LineState::Both => {
                    return Err(Error::Parameter(format!(
                        "line {ky} is measured with both polarities and cannot be interleaved"
                    )))
                }
            };
            let start = (c * ny + ky) * nx;
            out.data[start..start + nx].copy_from_slice(&src.data[start..start + nx]);
        }
    }
    Ok(out)
}

/// EPI measurements, calibration data and (for simulations) the gold standard.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub epi_pos: KSpaceGrid,
    pub epi_neg: KSpaceGrid,
    pub pattern: SamplingPattern,
    pub acs_pos: KSpaceGrid,
    pub acs_neg: KSpaceGrid,
    pub acs_pattern: SamplingPattern,
    pub gold: Option<(KSpaceGrid, KSpaceGrid)>,
}

impl Dataset {
    /// Checks shape agreement and that unmeasured entries are exactly zero.
    pub fn validate(&self) -> Result<()> {
        if !self.epi_pos.same_shape(&self.epi_neg) {
            return Err(Error::Shape("EPI polarity grids differ in shape".into()));
        }
        if !self.acs_pos.same_shape(&self.acs_neg) {
            return Err(Error::Shape("ACS polarity grids differ in shape".into()));
        }
        if self.acs_pos.n_ch() != self.epi_pos.n_ch() {
            return Err(Error::Shape(format!(
                "ACS has {} channels, EPI has {}",
                self.acs_pos.n_ch(),
                self.epi_pos.n_ch()
            )));
        }
        if self.pattern.ny() != self.epi_pos.ny() {
            return Err(Error::Shape("EPI pattern does not match grid rows".into()));
        }
        if self.acs_pattern.ny() != self.acs_pos.ny() {
            return Err(Error::Shape("ACS pattern does not match grid rows".into()));
        }
        if let Some((gp, gn)) = &self.gold {
            if !gp.same_shape(&self.epi_pos) || !gn.same_shape(&self.epi_pos) {
                return Err(Error::Shape("gold grids differ in shape from EPI".into()));
            }
        }
        let checks = [
            (
                &self.epi_pos,
                self.pattern.rows_for(Polarity::Positive),
                "epi pos",
            ),
            (
                &self.epi_neg,
                self.pattern.rows_for(Polarity::Negative),
                "epi neg",
            ),
            (&self.acs_pos, self.acs_pattern.acquired_rows(), "acs pos"),
            (&self.acs_neg, self.acs_pattern.acquired_rows(), "acs neg"),
        ];
        for (grid, rows, name) in checks {
            if grid.masked_rows(&rows) != *grid {
                return Err(Error::Parameter(format!(
                    "{name} grid has nonzero samples on unmeasured lines"
                )));
            }
        }
        Ok(())
    }

    /// Per-sample measured flags of the positive and negative EPI grids.
    pub fn epi_masks(&self) -> (Vec<bool>, Vec<bool>) {
        let (n_ch, _, nx) = self.epi_pos.dims();
        (
            expand_rows(&self.pattern.rows_for(Polarity::Positive), n_ch, nx),
            expand_rows(&self.pattern.rows_for(Polarity::Negative), n_ch, nx),
        )
    }

    /// Per-sample measured flags shared by both ACS grids.
    pub fn acs_mask(&self) -> Vec<bool> {
        let (n_ch, _, nx) = self.acs_pos.dims();
        expand_rows(&self.acs_pattern.acquired_rows(), n_ch, nx)
    }
}

/// Expands a per-row flag to per-sample flags in `(channel, ky, kx)` order.
pub(crate) fn expand_rows(rows: &[bool], n_ch: usize, nx: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(n_ch * rows.len() * nx);
    for _ in 0..n_ch {
        for &r in rows {
            out.extend(std::iter::repeat_n(r, nx));
        }
    }
    out
}
