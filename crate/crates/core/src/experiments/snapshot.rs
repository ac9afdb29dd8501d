//! Binary field snapshots and forcing index files.
//!
//! A snapshot is one text header line
//! `HYDROSTAT1 <nx> <ny> <nlev> <time> <name> LE` followed by `nx·ny·nlev`
//! little-endian `f64` values, `x` fastest, then `y`, then level. Cell fields
//! store `nz` levels, interface fields (`w`) store `nz + 1`, surface fields 1.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fields::State;
use crate::homogenize::{wall_from_field, BoundaryForcing};
use crate::mesh::{GridSpec, ScalarField, VectorField, WField};

pub const MAGIC: &str = "HYDROSTAT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub nx: usize,
    pub ny: usize,
    pub nlev: usize,
    pub time: f64,
    pub name: String,
    pub data: Vec<f64>,
}

impl Snapshot {
    pub fn from_scalar(f: &ScalarField, time: f64, name: &str) -> Self {
        Self {
            nx: f.nx,
            ny: f.ny,
            nlev: f.nz,
            time,
            name: name.into(),
            data: f.data.clone(),
        }
    }

    pub fn from_w(w: &WField, time: f64) -> Self {
        Self {
            nx: w.nx,
            ny: w.ny,
            nlev: w.nz + 1,
            time,
            name: "w".into(),
            data: w.data.clone(),
        }
    }

    /// Cell-centred (or surface) field on `grid`.
    pub fn to_scalar(&self, grid: &GridSpec) -> Result<ScalarField> {
        if self.nx != grid.nx || self.ny != grid.ny || !(self.nlev == grid.nz || self.nlev == 1) {
            return Err(Error::GridMismatch(format!(
                "snapshot `{}` is {}x{}x{}, grid is {}x{}x{}",
                self.name, self.nx, self.ny, self.nlev, grid.nx, grid.ny, grid.nz
            )));
        }
        let mut f = ScalarField::with_levels(grid, self.nlev);
        f.data.copy_from_slice(&self.data);
        Ok(f)
    }

    pub fn to_w(&self, grid: &GridSpec) -> Result<WField> {
        if self.nx != grid.nx || self.ny != grid.ny || self.nlev != grid.nz + 1 {
            return Err(Error::GridMismatch(format!(
                "snapshot `{}` does not hold interface values of a {}x{}x{} grid",
                self.name, grid.nx, grid.ny, grid.nz
            )));
        }
        let mut w = WField::zeros(grid);
        w.data.copy_from_slice(&self.data);
        Ok(w)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        if self.name.is_empty() || self.name.contains(char::is_whitespace) {
            return Err(Error::Format(format!("snapshot name `{}` must be one word", self.name)));
        }
        if self.data.len() != self.nx * self.ny * self.nlev {
            return Err(Error::Format("snapshot payload does not match its dimensions".into()));
        }
        writeln!(out, "{MAGIC} {} {} {} {:?} {} LE", self.nx, self.ny, self.nlev, self.time, self.name)?;
        let mut bytes = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut rd = BufReader::new(input);
        let mut header = Vec::new();
        rd.read_until(b'\n', &mut header)?;
        let header = String::from_utf8(header).map_err(|_| Error::Format("snapshot header is not UTF-8".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 7 || parts[0] != MAGIC {
            return Err(Error::Format(format!("not a {MAGIC} snapshot header: `{}`", header.trim_end())));
        }
        if parts[6] != "LE" {
            return Err(Error::Format(format!("unsupported byte order `{}`", parts[6])));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad dimension `{s}`")));
        let (nx, ny, nlev) = (num(parts[1])?, num(parts[2])?, num(parts[3])?);
        let time: f64 = parts[4].parse().map_err(|_| Error::Format(format!("bad time `{}`", parts[4])))?;
        let n = nx * ny * nlev;
        let mut payload = Vec::new();
        rd.read_to_end(&mut payload)?;
        if payload.len() != 8 * n {
            return Err(Error::Format(format!(
                "payload holds {} bytes, expected {} for {nx}x{ny}x{nlev}",
                payload.len(),
                8 * n
            )));
        }
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            nx,
            ny,
            nlev,
            time,
            name: parts[5].into(),
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

/// Writes `u`, `v`, `T`, `w` and `ps` of `state` as `<dir>/<field>_<tag>.snap`.
pub fn write_state(dir: &Path, tag: &str, state: &State) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let t = state.time;
    let snaps = [
        Snapshot::from_scalar(&state.v.x, t, "u"),
        Snapshot::from_scalar(&state.v.y, t, "v"),
        Snapshot::from_scalar(&state.temp, t, "T"),
        Snapshot::from_w(&state.w, t),
        Snapshot::from_scalar(&state.ps, t, "ps"),
    ];
    let mut paths = Vec::new();
    for s in snaps {
        let p = dir.join(format!("{}_{tag}.snap", s.name));
        s.write(&p)?;
        paths.push(p);
    }
    Ok(paths)
}

/// Reads a state written by [`write_state`]; `w` is rebuilt from `v`.
pub fn read_state(dir: &Path, tag: &str, grid: &GridSpec) -> Result<State> {
    let load = |name: &str| Snapshot::read(&dir.join(format!("{name}_{tag}.snap")));
    let u = load("u")?;
    let v = load("v")?.to_scalar(grid)?;
    let temp = load("T")?.to_scalar(grid)?;
    let mut s = State::new(grid, VectorField::new(u.to_scalar(grid)?, v), temp)?;
    s.ps = load("ps")?.to_scalar(grid)?;
    s.time = u.time;
    Ok(s)
}

/// RMS and max-abs differences of two snapshots of the same shape.
pub fn diff(a: &Snapshot, b: &Snapshot) -> Result<(f64, f64)> {
    if (a.nx, a.ny, a.nlev) != (b.nx, b.ny, b.nlev) {
        return Err(Error::GridMismatch(format!(
            "snapshots differ in shape: {}x{}x{} vs {}x{}x{}",
            a.nx, a.ny, a.nlev, b.nx, b.ny, b.nlev
        )));
    }
    let mut sq = 0.0;
    let mut inf = 0.0_f64;
    for (x, y) in a.data.iter().zip(&b.data) {
        let d = x - y;
        sq += d * d;
        inf = inf.max(d.abs());
    }
    Ok(((sq / a.data.len().max(1) as f64).sqrt(), inf))
}

/// One time sample of boundary forcing as stored on disk: the surface stress
/// and a 3D field whose side-wall traces give `T_s`.
#[derive(Debug, Clone)]
pub struct ForcingSample {
    pub time: f64,
    pub tau: VectorField,
    pub ts: ScalarField,
}

/// Writes the snapshots and `forcing.idx` (lines `time tau_x tau_y ts`, paths
/// relative to the index) into `dir`; returns the index path.
pub fn write_forcing(dir: &Path, samples: &[ForcingSample]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut index = String::from("# time tau_x tau_y T_s\n");
    for (n, s) in samples.iter().enumerate() {
        let names = [format!("tau_x_{n:04}.snap"), format!("tau_y_{n:04}.snap"), format!("ts_{n:04}.snap")];
        Snapshot::from_scalar(&s.tau.x, s.time, "tau_x").write(&dir.join(&names[0]))?;
        Snapshot::from_scalar(&s.tau.y, s.time, "tau_y").write(&dir.join(&names[1]))?;
        Snapshot::from_scalar(&s.ts, s.time, "T_s").write(&dir.join(&names[2]))?;
        index.push_str(&format!("{:?} {} {} {}\n", s.time, names[0], names[1], names[2]));
    }
    let path = dir.join("forcing.idx");
    fs::write(&path, index)?;
    Ok(path)
}

/// Loads a forcing index; wall values of `T_s` come from linear
/// extrapolation of the stored field to the side faces.
pub fn read_forcing(index: &Path, grid: &GridSpec, alpha_v: f64, alpha_t: f64) -> Result<BoundaryForcing> {
    let base = index.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(index)?;
    let mut times = Vec::new();
    let mut taus = Vec::new();
    let mut walls = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!(
                "{}:{}: expected `time tau_x tau_y T_s`",
                index.display(),
                n + 1
            )));
        }
        let t: f64 = parts[0]
            .parse()
            .map_err(|_| Error::Format(format!("{}:{}: bad time `{}`", index.display(), n + 1, parts[0])))?;
        let tx = Snapshot::read(&base.join(parts[1]))?.to_scalar(grid)?;
        let ty = Snapshot::read(&base.join(parts[2]))?.to_scalar(grid)?;
        if tx.nz != 1 || ty.nz != 1 {
            return Err(Error::GridMismatch("wind stress snapshots must be surface fields".into()));
        }
        let ts = Snapshot::read(&base.join(parts[3]))?.to_scalar(grid)?;
        times.push(t);
        taus.push(VectorField::new(tx, ty));
        walls.push(wall_from_field(grid, &ts)?);
    }
    BoundaryForcing::new(grid, times, taus, walls, alpha_v, alpha_t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let g = GridSpec::new(1.0, 2.0, 0.5, 4, 5, 2).unwrap();
        let f = ScalarField::from_fn(&g, |x, y, z| x.sin() + y * 1e-300 + z / 3.0);
        let s = Snapshot::from_scalar(&f, 0.1 + 0.2, "T");
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(buf.len() - buf.iter().position(|b| *b == b'\n').unwrap() - 1, 8 * 40);
        let back = Snapshot::read_from(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_scalar(&g).unwrap(), f);
        let w = Snapshot::from_w(&WField::zeros(&g), 0.0);
        assert_eq!(w.nlev, 3);
        assert!(w.to_w(&g).is_ok());
        assert!(w.to_scalar(&g).is_err());
    }

    #[test]
    fn rejects_damaged_files() {
        let s = Snapshot::from_scalar(&ScalarField::zeros(&GridSpec::unit(4, 4, 2).unwrap()), 0.0, "T");
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert!(matches!(Snapshot::read_from(&buf[..buf.len() - 1]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Snapshot::read_from(&bad[..]), Err(Error::Format(_))));
        let text = String::from_utf8_lossy(&buf[..buf.iter().position(|b| *b == b'\n').unwrap()]).replace("LE", "BE");
        let mut be = text.into_bytes();
        be.push(b'\n');
        be.extend_from_slice(&buf[buf.iter().position(|b| *b == b'\n').unwrap() + 1..]);
        assert!(matches!(Snapshot::read_from(&be[..]), Err(Error::Format(_))));
    }

    #[test]
    fn diff_reports_rms_and_max() {
        let g = GridSpec::unit(4, 4, 2).unwrap();
        let a = Snapshot::from_scalar(&ScalarField::zeros(&g), 0.0, "a");
        let mut bf = ScalarField::zeros(&g);
        bf.data[0] = 2.0;
        let b = Snapshot::from_scalar(&bf, 0.0, "b");
        let (rms, inf) = diff(&a, &b).unwrap();
        assert_eq!(inf, 2.0);
        assert!((rms - (4.0_f64 / 32.0).sqrt()).abs() < 1e-15);
    }
}
