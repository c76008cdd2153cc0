//! Plain-text artifact formats.
//!
//! Every file starts with `<MAGIC> <version>`; floats are written with 17
//! significant digits so that write -> read -> write is byte-identical.
//! Writes go to a temporary sibling first and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::closure::{TauMethod, TauSeries};
use crate::error::{Result, RomError};
use crate::fom::SnapshotSet;
use crate::galerkin::{Provenance, QuadraticModel, Tensor3};
use crate::grid::Grid1D;
use crate::pod::PodBasis;
use crate::regression::ClosureOperators;
use crate::rom::{ModelKind, RomTrajectory};

pub const SNAPSHOT_MAGIC: &str = "ROMSNAP";
pub const POD_MAGIC: &str = "ROMPOD";
pub const OPERATORS_MAGIC: &str = "ROMOPS";
pub const TAU_MAGIC: &str = "ROMTAU";
pub const CLOSURE_MAGIC: &str = "ROMCLS";
pub const TRAJECTORY_MAGIC: &str = "ROMTRJ";
pub const FORMAT_VERSION: &str = "1";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_row<'a>(out: &mut String, vals: impl IntoIterator<Item = &'a f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(' ');
        }
        out.push_str(&fmt_f64(*v));
        first = false;
    }
    out.push('\n');
}

fn push_matrix(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        push_row(out, m.row(i).iter());
    }
}

fn push_tensor(out: &mut String, b: &Tensor3) {
    let r = b.dim();
    for i in 0..r {
        for m in 0..r {
            let row: Vec<f64> = (0..r).map(|n| b.get(i, m, n)).collect();
            push_row(out, &row);
        }
    }
}

/// Line cursor that reports errors against the file name and line number.
struct Lines<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        Self {
            path,
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> RomError {
        RomError::Format {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.lines.next() {
            Some((k, l)) => {
                self.line = k + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err(format!("unexpected end of file, expected {what}")))
            }
        }
    }

    fn header(&mut self, magic: &str) -> Result<()> {
        let line = self.next("header")?;
        let mut parts = line.split_whitespace();
        let found_magic = parts.next().unwrap_or("");
        let version = parts.next().unwrap_or("");
        if found_magic != magic {
            return Err(self.err(format!(
                "expected `{magic} {FORMAT_VERSION}` header, found `{line}`"
            )));
        }
        if version != FORMAT_VERSION || parts.next().is_some() {
            return Err(RomError::Version {
                path: self.path.to_path_buf(),
                expected: format!("{magic} {FORMAT_VERSION}"),
                found: line.trim().to_string(),
            });
        }
        Ok(())
    }

    fn label(&mut self, label: &str) -> Result<()> {
        let line = self.next(label)?;
        if line.trim() != label {
            return Err(self.err(format!("expected block label `{label}`, found `{}`", line.trim())));
        }
        Ok(())
    }

    fn tokens(&mut self, what: &str, count: usize) -> Result<Vec<&'a str>> {
        let line = self.next(what)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != count {
            return Err(self.err(format!("{what}: expected {count} fields, found {}", toks.len())));
        }
        Ok(toks)
    }

    fn floats(&mut self, what: &str, count: usize) -> Result<Vec<f64>> {
        let toks = self.tokens(what, count)?;
        toks.iter()
            .enumerate()
            .map(|(k, t)| {
                t.parse::<f64>()
                    .map_err(|_| self.err(format!("{what}: field {} `{t}` is not a number", k + 1)))
            })
            .collect()
    }

    fn matrix(&mut self, what: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let row = self.floats(what, cols)?;
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    fn tensor(&mut self, what: &str, r: usize) -> Result<Tensor3> {
        let mut b = Tensor3::zeros(r);
        for i in 0..r {
            for m in 0..r {
                let row = self.floats(what, r)?;
                for (n, v) in row.into_iter().enumerate() {
                    b.set(i, m, n, v);
                }
            }
        }
        Ok(b)
    }

    fn parse<T: std::str::FromStr>(&self, tok: &str, what: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.err(format!("{what}: cannot parse `{tok}`")))
    }

    fn finish(&mut self) -> Result<()> {
        for (k, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                self.line = k + 1;
                return Err(self.err("trailing content after the last block"));
            }
        }
        Ok(())
    }
}

/// Writes `contents` to a temporary file next to `path` and renames it into
/// place, creating parent directories as needed.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| RomError::Io { path: p, source }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents.as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| RomError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ROMSNAP

pub fn render_snapshots(s: &SnapshotSet) -> String {
    let mut out = format!("{SNAPSHOT_MAGIC} {FORMAT_VERSION}\n");
    out.push_str(&format!(
        "{} {} {} {} {}\n",
        s.n_points(),
        s.len(),
        fmt_f64(s.grid.length()),
        fmt_f64(s.dt_snap),
        fmt_f64(s.t0())
    ));
    for j in 0..s.len() {
        push_row(&mut out, s.data.column(j).iter());
    }
    out
}

pub fn parse_snapshots(text: &str, path: &Path) -> Result<SnapshotSet> {
    let mut c = Lines::new(text, path);
    c.header(SNAPSHOT_MAGIC)?;
    let t = c.tokens("dimension line `N M L dt_snap t0`", 5)?;
    let n: usize = c.parse(t[0], "N")?;
    let m: usize = c.parse(t[1], "M")?;
    let length: f64 = c.parse(t[2], "L")?;
    let dt_snap: f64 = c.parse(t[3], "dt_snap")?;
    let t0: f64 = c.parse(t[4], "t0")?;
    let grid = Grid1D::new(n, length).map_err(|e| c.err(e.to_string()))?;
    let mut data = DMatrix::zeros(n, m);
    for j in 0..m {
        let col = c.floats("snapshot", n)?;
        data.set_column(j, &DVector::from_vec(col));
    }
    c.finish()?;
    SnapshotSet::new(grid, t0, dt_snap, data).map_err(|e| c.err(e.to_string()))
}

// ROMPOD

pub fn render_pod(b: &PodBasis) -> String {
    let mut out = format!("{POD_MAGIC} {FORMAT_VERSION}\n");
    out.push_str(&format!(
        "{} {} {}\n",
        b.n_points(),
        b.r_max(),
        fmt_f64(b.grid.length())
    ));
    push_row(&mut out, &b.mean_mode);
    for i in 0..b.r_max() {
        push_row(&mut out, b.mode(i));
    }
    push_row(&mut out, &b.eigenvalues);
    out
}

pub fn parse_pod(text: &str, path: &Path) -> Result<PodBasis> {
    let mut c = Lines::new(text, path);
    c.header(POD_MAGIC)?;
    let t = c.tokens("dimension line `N r_max L`", 3)?;
    let n: usize = c.parse(t[0], "N")?;
    let r: usize = c.parse(t[1], "r_max")?;
    let length: f64 = c.parse(t[2], "L")?;
    let grid = Grid1D::new(n, length).map_err(|e| c.err(e.to_string()))?;
    let mean_mode = c.floats("mean mode", n)?;
    let mut modes = DMatrix::zeros(n, r);
    for i in 0..r {
        let col = c.floats("mode", n)?;
        modes.set_column(i, &DVector::from_vec(col));
    }
    let eigenvalues = c.floats("eigenvalues", r)?;
    c.finish()?;
    Ok(PodBasis {
        grid,
        mean_mode,
        modes,
        eigenvalues,
    })
}

// ROMOPS

pub fn render_operators(m: &QuadraticModel) -> String {
    let mut out = format!("{OPERATORS_MAGIC} {FORMAT_VERSION}\n");
    out.push_str(&format!(
        "{} {} {}\n",
        m.r(),
        fmt_f64(m.viscosity),
        m.provenance.as_str()
    ));
    out.push_str("C\n");
    push_row(&mut out, m.c.iter());
    out.push_str("A\n");
    push_matrix(&mut out, &m.a);
    out.push_str("B\n");
    push_tensor(&mut out, &m.b);
    out.push_str("A_visc\n");
    push_matrix(&mut out, &m.a_visc);
    out.push_str("A_mean\n");
    push_matrix(&mut out, &m.a_mean);
    out
}

pub fn parse_operators(text: &str, path: &Path) -> Result<QuadraticModel> {
    let mut c = Lines::new(text, path);
    c.header(OPERATORS_MAGIC)?;
    let t = c.tokens("dimension line `r viscosity provenance`", 3)?;
    let r: usize = c.parse(t[0], "r")?;
    let viscosity: f64 = c.parse(t[1], "viscosity")?;
    let provenance =
        Provenance::parse(t[2]).ok_or_else(|| c.err(format!("unknown provenance `{}`", t[2])))?;
    c.label("C")?;
    let cv = DVector::from_vec(c.floats("C", r)?);
    c.label("A")?;
    let a = c.matrix("A row", r, r)?;
    c.label("B")?;
    let b = c.tensor("B row", r)?;
    c.label("A_visc")?;
    let a_visc = c.matrix("A_visc row", r, r)?;
    c.label("A_mean")?;
    let a_mean = c.matrix("A_mean row", r, r)?;
    c.finish()?;
    Ok(QuadraticModel {
        c: cv,
        a,
        a_visc,
        a_mean,
        b,
        viscosity,
        provenance,
    })
}

// ROMTAU

pub fn render_tau(t: &TauSeries) -> String {
    let mut out = format!("{TAU_MAGIC} {FORMAT_VERSION}\n");
    out.push_str(&format!("{} {} {} {}\n", t.r(), t.len(), t.method, t.m()));
    push_row(&mut out, &t.times);
    push_matrix(&mut out, &t.values);
    out
}

pub fn parse_tau(text: &str, path: &Path) -> Result<TauSeries> {
    let mut c = Lines::new(text, path);
    c.header(TAU_MAGIC)?;
    let t = c.tokens("dimension line `r M_used method m`", 4)?;
    let r: usize = c.parse(t[0], "r")?;
    let k: usize = c.parse(t[1], "M_used")?;
    let m: usize = c.parse(t[3], "m")?;
    let method = match t[2] {
        "commutator" => TauMethod::Commutator { m },
        "residual" => TauMethod::Residual,
        other => return Err(c.err(format!("unknown closure method `{other}`"))),
    };
    let times = c.floats("times", k)?;
    let values = c.matrix("tau row", r, k)?;
    c.finish()?;
    Ok(TauSeries {
        times,
        values,
        method,
    })
}

// ROMCLS

pub fn render_closure(ops: &ClosureOperators) -> String {
    let mut out = format!("{CLOSURE_MAGIC} {FORMAT_VERSION}\n");
    out.push_str(&format!(
        "{} {} {} {} {}\n",
        u8::from(ops.constrained),
        fmt_f64(ops.epsilon),
        fmt_f64(ops.tol),
        fmt_f64(ops.residual),
        ops.kept_rank
    ));
    out.push_str(&format!("{}\n", ops.r()));
    out.push_str("A\n");
    push_matrix(&mut out, &ops.a_tilde);
    out.push_str("B\n");
    push_tensor(&mut out, &ops.b_tilde);
    out
}

pub fn parse_closure(text: &str, path: &Path) -> Result<ClosureOperators> {
    let mut c = Lines::new(text, path);
    c.header(CLOSURE_MAGIC)?;
    let t = c.tokens("flags line `constrained epsilon tol residual kept_rank`", 5)?;
    let constrained = match t[0] {
        "0" => false,
        "1" => true,
        other => return Err(c.err(format!("constrained flag must be 0 or 1, found `{other}`"))),
    };
    let epsilon: f64 = c.parse(t[1], "epsilon")?;
    let tol: f64 = c.parse(t[2], "tol")?;
    let residual: f64 = c.parse(t[3], "residual")?;
    let kept_rank: usize = c.parse(t[4], "kept_rank")?;
    let rt = c.tokens("dimension line `r`", 1)?;
    let r: usize = c.parse(rt[0], "r")?;
    c.label("A")?;
    let a_tilde = c.matrix("A row", r, r)?;
    c.label("B")?;
    let b_tilde = c.tensor("B row", r)?;
    c.finish()?;
    Ok(ClosureOperators {
        a_tilde,
        b_tilde,
        constrained,
        epsilon,
        tol,
        residual,
        kept_rank,
    })
}

// ROMTRJ

pub fn render_trajectory(t: &RomTrajectory) -> String {
    let mut out = format!("{TRAJECTORY_MAGIC} {FORMAT_VERSION}\n");
    out.push_str(&format!(
        "{} {} {} {} {}\n",
        t.r(),
        t.len(),
        fmt_f64(t.dt),
        t.model_kind,
        t.blowup.map_or(-1, |s| s as i64)
    ));
    push_row(&mut out, &t.times);
    push_matrix(&mut out, &t.coeffs);
    push_row(&mut out, &t.energy);
    out
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<RomTrajectory> {
    let mut c = Lines::new(text, path);
    c.header(TRAJECTORY_MAGIC)?;
    let t = c.tokens("dimension line `r K dt model_kind blowup_index`", 5)?;
    let r: usize = c.parse(t[0], "r")?;
    let k: usize = c.parse(t[1], "K")?;
    let dt: f64 = c.parse(t[2], "dt")?;
    let model_kind = ModelKind::parse(t[3]).ok_or_else(|| c.err(format!("unknown model kind `{}`", t[3])))?;
    let blow: i64 = c.parse(t[4], "blowup_index")?;
    let blowup = match blow {
        -1 => None,
        s if s >= 0 => Some(s as usize),
        s => return Err(c.err(format!("invalid blow-up index {s}"))),
    };
    let times = c.floats("times", k)?;
    let coeffs = c.matrix("coefficient row", r, k)?;
    let energy = c.floats("energy", k)?;
    c.finish()?;
    Ok(RomTrajectory {
        times,
        coeffs,
        model_kind,
        dt,
        energy,
        blowup,
    })
}

macro_rules! file_pair {
    ($write:ident, $read:ident, $render:ident, $parse:ident, $ty:ty) => {
        pub fn $write(path: &Path, value: &$ty) -> Result<()> {
            write_atomic(path, &$render(value))
        }

        pub fn $read(path: &Path) -> Result<$ty> {
            $parse(&read_text(path)?, path)
        }
    };
}

file_pair!(
    write_snapshots,
    read_snapshots,
    render_snapshots,
    parse_snapshots,
    SnapshotSet
);
file_pair!(write_pod, read_pod, render_pod, parse_pod, PodBasis);
file_pair!(
    write_operators,
    read_operators,
    render_operators,
    parse_operators,
    QuadraticModel
);
file_pair!(write_tau, read_tau, render_tau, parse_tau, TauSeries);
file_pair!(
    write_closure,
    read_closure,
    render_closure,
    parse_closure,
    ClosureOperators
);
file_pair!(
    write_trajectory,
    read_trajectory,
    render_trajectory,
    parse_trajectory,
    RomTrajectory
);
