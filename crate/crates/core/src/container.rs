//! `.kspc` container: a UTF-8 `field:value` header terminated by a blank line,
//! one mask byte per phase-encode line (0 unacquired, 1 positive, 2 negative, 3 both),
//! then little-endian `f64` real/imaginary pairs in `(channel, ky, kx)` order.

use std::fmt;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kspace::{Dataset, KSpaceGrid, LineState, PartialFourier, Polarity, SamplingPattern};

pub const FORMAT_VERSION: u32 = 1;
pub const EXTENSION: &str = "kspc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Epi,
    Acs,
    Gold,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Epi => "epi",
            Role::Acs => "acs",
            Role::Gold => "gold",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "epi" => Some(Role::Epi),
            "acs" => Some(Role::Acs),
            "gold" => Some(Role::Gold),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One grid with its role and line mask, i.e. the content of a single file.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub role: Role,
    pub grid: KSpaceGrid,
    pub pattern: SamplingPattern,
}

const FIELDS: [&str; 10] = [
    "version", "nch", "ny", "nx", "role", "polarity", "R", "pf_num", "pf_den", "offset",
];

pub fn encode(record: &GridRecord) -> Result<Vec<u8>> {
    let g = &record.grid;
    let p = &record.pattern;
    if p.ny() != g.ny() {
        return Err(Error::Shape(format!(
            "mask has {} lines but grid has {}",
            p.ny(),
            g.ny()
        )));
    }
    let header = format!(
        "version:{FORMAT_VERSION}\nnch:{}\nny:{}\nnx:{}\nrole:{}\npolarity:{}\nR:{}\npf_num:{}\npf_den:{}\noffset:{}\n\n",
        g.n_ch(),
        g.ny(),
        g.nx(),
        record.role,
        g.polarity(),
        p.accel(),
        p.pf().num(),
        p.pf().den(),
        p.offset(),
    );
    let mut out = Vec::with_capacity(header.len() + p.ny() + 16 * g.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(p.lines().iter().map(|&l| l as u8));
    for z in g.data() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

fn field<'a>(values: &'a [Option<&'a str>; 10], name: &str) -> Result<&'a str> {
    let i = FIELDS.iter().position(|f| *f == name).expect("known field");
    values[i].ok_or_else(|| Error::parse(name, "missing"))
}

fn parse_usize(values: &[Option<&str>; 10], name: &str) -> Result<usize> {
    let raw = field(values, name)?;
    raw.parse()
        .map_err(|_| Error::parse(name, format!("`{raw}` is not a non-negative integer")))
}

pub fn decode(bytes: &[u8]) -> Result<GridRecord> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::parse("header", "no blank line terminating the header"))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::parse("header", "not valid UTF-8"))?;
    let body = &bytes[split + 2..];

    let mut values: [Option<&str>; 10] = [None; 10];
    for line in header.lines() {
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| Error::parse("header", format!("line `{line}` is not field:value")))?;
        let i = FIELDS
            .iter()
            .position(|f| *f == key)
            .ok_or_else(|| Error::parse(key, "unknown field"))?;
        if values[i].replace(value).is_some() {
            return Err(Error::parse(key, "duplicate field"));
        }
    }

    let version = field(&values, "version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::Version {
            found: version.to_string(),
            expected: FORMAT_VERSION,
        });
    }
    let n_ch = parse_usize(&values, "nch")?;
    let ny = parse_usize(&values, "ny")?;
    let nx = parse_usize(&values, "nx")?;
    for (name, v) in [("nch", n_ch), ("ny", ny), ("nx", nx)] {
        if v == 0 {
            return Err(Error::parse(name, "must be positive"));
        }
    }
    let role_raw = field(&values, "role")?;
    let role = Role::parse(role_raw)
        .ok_or_else(|| Error::parse("role", format!("`{role_raw}` not in {{epi,acs,gold}}")))?;
    let pol_raw = field(&values, "polarity")?;
    let polarity = Polarity::parse(pol_raw)
        .ok_or_else(|| Error::parse("polarity", format!("`{pol_raw}` not in {{pos,neg,none}}")))?;
    let accel = parse_usize(&values, "R")?;
    if accel == 0 {
        return Err(Error::parse("R", "must be >= 1"));
    }
    let pf_num = parse_usize(&values, "pf_num")?;
    let pf_den = parse_usize(&values, "pf_den")?;
    let pf = PartialFourier::new(pf_num as u32, pf_den as u32)
        .map_err(|e| Error::parse("pf_num", e.to_string()))?;
    let offset = parse_usize(&values, "offset")?;

    let n = n_ch
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nx))
        .ok_or_else(|| Error::parse("nch", "grid size overflows"))?;
    let expected = ny + 16 * n;
    if body.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: body.len(),
        });
    }
    if body.len() > expected {
        return Err(Error::parse(
            "payload",
            format!(
                "{} trailing bytes after the declared samples",
                body.len() - expected
            ),
        ));
    }

    let lines = body[..ny]
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            LineState::from_byte(b)
                .ok_or_else(|| Error::parse("mask", format!("line {i} has invalid byte {b}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let pattern = SamplingPattern::from_lines(lines, accel, pf, offset)
        .map_err(|e| Error::parse("mask", e.to_string()))?;
    if role == Role::Epi && !pattern.is_regular() {
        return Err(Error::parse(
            "mask",
            format!("does not match R={accel}, pf={pf}, offset={offset}"),
        ));
    }

    let data = body[ny..]
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    let grid = KSpaceGrid::from_data(n_ch, ny, nx, polarity, data)
        .map_err(|e| Error::parse("payload", e.to_string()))?;
    Ok(GridRecord {
        role,
        grid,
        pattern,
    })
}

pub fn write_grid(path: impl AsRef<Path>, record: &GridRecord) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(record)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridRecord> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// File stem used for each grid of a dataset directory.
pub fn grid_file_name(role: Role, polarity: Polarity) -> String {
    format!("{}_{}.{EXTENSION}", role, polarity)
}

/// Writes a dataset as four (or six, with gold) containers into `dir`.
pub fn save_dataset(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let dir = dir.as_ref();
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = vec![
        (
            Role::Epi,
            &dataset.epi_pos,
            dataset.pattern.clone(),
            Polarity::Positive,
        ),
        (
            Role::Epi,
            &dataset.epi_neg,
            dataset.pattern.clone(),
            Polarity::Negative,
        ),
        (
            Role::Acs,
            &dataset.acs_pos,
            dataset.acs_pattern.clone(),
            Polarity::Positive,
        ),
        (
            Role::Acs,
            &dataset.acs_neg,
            dataset.acs_pattern.clone(),
            Polarity::Negative,
        ),
    ];
    if let Some((gp, gn)) = &dataset.gold {
        let full = SamplingPattern::fully_sampled(gp.ny());
        records.push((Role::Gold, gp, full.clone(), Polarity::Positive));
        records.push((Role::Gold, gn, full, Polarity::Negative));
    }
    for (role, grid, pattern, polarity) in records {
        let record = GridRecord {
            role,
            grid: grid.clone().with_polarity(polarity),
            pattern,
        };
        write_grid(dir.join(grid_file_name(role, polarity)), &record)?;
    }
    Ok(())
}

fn load_pair(dir: &Path, role: Role) -> Result<(GridRecord, GridRecord)> {
    let pos = read_grid(dir.join(grid_file_name(role, Polarity::Positive)))?;
    let neg = read_grid(dir.join(grid_file_name(role, Polarity::Negative)))?;
    for (rec, pol) in [(&pos, Polarity::Positive), (&neg, Polarity::Negative)] {
        if rec.role != role {
            return Err(Error::parse(
                "role",
                format!("expected {role}, file says {}", rec.role),
            ));
        }
        if rec.grid.polarity() != pol {
            return Err(Error::parse(
                "polarity",
                format!("expected {pol}, file says {}", rec.grid.polarity()),
            ));
        }
    }
    if pos.pattern != neg.pattern {
        return Err(Error::parse(
            "mask",
            format!("{role} polarity files carry different patterns"),
        ));
    }
    Ok((pos, neg))
}

/// Reads a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let (epi_pos, epi_neg) = load_pair(dir, Role::Epi)?;
    let (acs_pos, acs_neg) = load_pair(dir, Role::Acs)?;
    let gold_path = dir.join(grid_file_name(Role::Gold, Polarity::Positive));
    let gold = if gold_path.exists() {
        let (gp, gn) = load_pair(dir, Role::Gold)?;
        Some((gp.grid, gn.grid))
    } else {
        None
    };
    let dataset = Dataset {
        pattern: epi_pos.pattern,
        epi_pos: epi_pos.grid,
        epi_neg: epi_neg.grid,
        acs_pattern: acs_pos.pattern,
        acs_pos: acs_pos.grid,
        acs_neg: acs_neg.grid,
        gold,
    };
    dataset.validate()?;
    Ok(dataset)
}
