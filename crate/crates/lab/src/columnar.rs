//! Little-endian columnar binary format for paths, PDE solutions and flow
//! tables.
//!
//! Layout: the magic `RDLCOL01`, a metadata block (`u32` count, then per
//! entry a `u16`-prefixed UTF-8 key, a kind byte and the value), `u32`
//! column count, `u64` row count, `u16`-prefixed column names, then each
//! column as `nrows` little-endian `f64`.

use std::io::{self, Read, Write};

use rdl_core::flow::{FlowTable, Scheme};
use rdl_core::paths::{BrownianPath, DyadicGrid};
use rdl_core::zvonkin::ZvonkinSolution;

pub const MAGIC: &[u8; 8] = b"RDLCOL01";

#[derive(Debug, Clone, PartialEq)]
pub enum Meta {
    U64(u64),
    F64(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Columnar {
    pub meta: Vec<(String, Meta)>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a columnar file (bad magic)")]
    Magic,
    #[error("malformed file: {0}")]
    Malformed(String),
}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| io::Error::other("string longer than 65535 bytes"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_str<R: Read>(r: &mut R) -> Result<String, FormatError> {
    let len = u16::from_le_bytes(read_exact::<2, _>(r)?) as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| bad("non-UTF-8 string"))
}

impl Columnar {
    pub fn nrows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn push_meta(&mut self, key: &str, value: Meta) {
        self.meta.push((key.to_string(), value));
    }

    pub fn push_column(&mut self, name: &str, values: Vec<f64>) {
        self.names.push(name.to_string());
        self.columns.push(values);
    }

    pub fn meta(&self, key: &str) -> Option<&Meta> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64, FormatError> {
        match self.meta(key) {
            Some(Meta::U64(v)) => Ok(*v),
            _ => Err(bad(format!("missing integer metadata `{key}`"))),
        }
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64, FormatError> {
        match self.meta(key) {
            Some(Meta::F64(v)) => Ok(*v),
            _ => Err(bad(format!("missing float metadata `{key}`"))),
        }
    }

    pub fn meta_text(&self, key: &str) -> Result<&str, FormatError> {
        match self.meta(key) {
            Some(Meta::Text(v)) => Ok(v),
            _ => Err(bad(format!("missing text metadata `{key}`"))),
        }
    }

    pub fn column(&self, name: &str) -> Result<&[f64], FormatError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), FormatError> {
        let nrows = self.nrows();
        if self.columns.iter().any(|c| c.len() != nrows) {
            return Err(bad("ragged columns"));
        }
        w.write_all(MAGIC)?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &self.meta {
            write_str(w, k)?;
            match v {
                Meta::U64(x) => {
                    w.write_all(&[0])?;
                    w.write_all(&x.to_le_bytes())?;
                }
                Meta::F64(x) => {
                    w.write_all(&[1])?;
                    w.write_all(&x.to_le_bytes())?;
                }
                Meta::Text(s) => {
                    w.write_all(&[2])?;
                    write_str(w, s)?;
                }
            }
        }
        w.write_all(&(self.columns.len() as u32).to_le_bytes())?;
        w.write_all(&(nrows as u64).to_le_bytes())?;
        for n in &self.names {
            write_str(w, n)?;
        }
        for c in &self.columns {
            for v in c {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, FormatError> {
        if &read_exact::<8, _>(r)? != MAGIC {
            return Err(FormatError::Magic);
        }
        let nmeta = u32::from_le_bytes(read_exact::<4, _>(r)?);
        let mut meta = Vec::new();
        for _ in 0..nmeta {
            let k = read_str(r)?;
            let v = match read_exact::<1, _>(r)?[0] {
                0 => Meta::U64(u64::from_le_bytes(read_exact::<8, _>(r)?)),
                1 => Meta::F64(f64::from_le_bytes(read_exact::<8, _>(r)?)),
                2 => Meta::Text(read_str(r)?),
                k => return Err(bad(format!("unknown metadata kind {k}"))),
            };
            meta.push((k, v));
        }
        let ncols = u32::from_le_bytes(read_exact::<4, _>(r)?) as usize;
        let nrows = usize::try_from(u64::from_le_bytes(read_exact::<8, _>(r)?)).map_err(|_| bad("row count"))?;
        let names = (0..ncols).map(|_| read_str(r)).collect::<Result<Vec<_>, _>>()?;
        let mut columns = Vec::with_capacity(ncols);
        let mut buf = vec![0u8; nrows.checked_mul(8).ok_or_else(|| bad("row count"))?];
        for _ in 0..ncols {
            r.read_exact(&mut buf)?;
            columns.push(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { meta, names, columns })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FormatError> {
        let mut v = Vec::new();
        self.write_to(&mut v)?;
        Ok(v)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self, FormatError> {
        Self::read_from(&mut bytes)
    }
}

/// Header `level, dim, horizon, seed, trial`; columns `t, w0, w1, ...`.
pub fn path_to_columnar(path: &BrownianPath) -> Columnar {
    let mut c = Columnar::default();
    c.push_meta("level", Meta::U64(path.grid.level as u64));
    c.push_meta("dim", Meta::U64(path.dim as u64));
    c.push_meta("horizon", Meta::F64(path.grid.horizon));
    c.push_meta("seed", Meta::U64(path.seed));
    c.push_meta("trial", Meta::U64(path.trial_index));
    c.push_column("t", path.grid.points());
    for k in 0..path.dim {
        c.push_column(&format!("w{k}"), path.coordinate(k));
    }
    c
}

pub fn path_from_columnar(c: &Columnar) -> Result<BrownianPath, FormatError> {
    let level = u32::try_from(c.meta_u64("level")?).map_err(|_| bad("level"))?;
    let dim = c.meta_u64("dim")? as usize;
    let grid = DyadicGrid::new(level, c.meta_f64("horizon")?);
    let cols = (0..dim).map(|k| c.column(&format!("w{k}"))).collect::<Result<Vec<_>, _>>()?;
    let n = grid.len();
    if cols.iter().any(|col| col.len() != n) {
        return Err(bad("path length does not match level"));
    }
    let mut values = Vec::with_capacity(n * dim);
    for i in 0..n {
        for col in &cols {
            values.push(col[i]);
        }
    }
    Ok(BrownianPath {
        grid,
        dim,
        values,
        seed: c.meta_u64("seed")?,
        trial_index: c.meta_u64("trial")?,
    })
}

/// Grid header plus `U` and `dU` in long form (`t, x, u, du`).
pub fn zvonkin_to_columnar(sol: &ZvonkinSolution) -> Columnar {
    let g = sol.grid;
    let mut c = Columnar::default();
    c.push_meta("drift", Meta::Text(sol.b_spec.to_string()));
    c.push_meta("x_min", Meta::F64(g.x_min));
    c.push_meta("x_max", Meta::F64(g.x_max));
    c.push_meta("nx", Meta::U64(g.nx as u64));
    c.push_meta("nt", Meta::U64(g.nt as u64));
    c.push_meta("horizon", Meta::F64(g.horizon));
    c.push_meta("lambda", Meta::F64(sol.lambda));
    c.push_meta("grad_sup", Meta::F64(sol.grad_sup));
    let rows = (g.nt + 1) * g.nx;
    c.push_column("t", (0..rows).map(|j| g.t(j / g.nx)).collect());
    c.push_column("x", (0..rows).map(|j| g.x(j % g.nx)).collect());
    c.push_column("u", sol.u.clone());
    c.push_column("du", sol.du.clone());
    c
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Direct => "direct",
        Scheme::Transformed => "transformed",
    }
}

/// Long form `s, t, x, disp, escaped` in table order.
pub fn flow_table_to_columnar(table: &FlowTable) -> Columnar {
    let (ns, nt, nx) = (table.s_grid.len(), table.t_grid.len(), table.x_grid.len());
    let mut c = Columnar::default();
    c.push_meta("scheme", Meta::Text(scheme_name(table.scheme).into()));
    c.push_meta("dt", Meta::F64(table.dt));
    c.push_meta("noise_seed", Meta::U64(table.noise_seed));
    c.push_meta("noise_trial", Meta::U64(table.noise_trial));
    c.push_meta("ns", Meta::U64(ns as u64));
    c.push_meta("nt", Meta::U64(nt as u64));
    c.push_meta("nx", Meta::U64(nx as u64));
    let rows = ns * nt * nx;
    c.push_column("s", (0..rows).map(|j| table.s_grid[j / (nt * nx)]).collect());
    c.push_column("t", (0..rows).map(|j| table.t_grid[(j / nx) % nt]).collect());
    c.push_column("x", (0..rows).map(|j| table.x_grid[j % nx]).collect());
    c.push_column("disp", table.disp.clone());
    c.push_column(
        "escaped",
        (0..rows)
            .map(|j| f64::from(u8::from(table.escaped[(j / (nt * nx)) * nx + j % nx])))
            .collect(),
    );
    c
}

pub fn flow_table_from_columnar(c: &Columnar) -> Result<FlowTable, FormatError> {
    let ns = c.meta_u64("ns")? as usize;
    let nt = c.meta_u64("nt")? as usize;
    let nx = c.meta_u64("nx")? as usize;
    let (s, t, x) = (c.column("s")?, c.column("t")?, c.column("x")?);
    if s.len() != ns * nt * nx {
        return Err(bad("flow table size does not match header"));
    }
    let esc = c.column("escaped")?;
    let scheme = match c.meta_text("scheme")? {
        "direct" => Scheme::Direct,
        "transformed" => Scheme::Transformed,
        other => return Err(bad(format!("unknown scheme `{other}`"))),
    };
    Ok(FlowTable {
        s_grid: (0..ns).map(|i| s[i * nt * nx]).collect(),
        t_grid: (0..nt).map(|i| t[i * nx]).collect(),
        x_grid: x[..nx].to_vec(),
        disp: c.column("disp")?.to_vec(),
        escaped: (0..ns * nx).map(|j| esc[(j / nx) * nt * nx + j % nx] != 0.0).collect(),
        noise_seed: c.meta_u64("noise_seed")?,
        noise_trial: c.meta_u64("noise_trial")?,
        scheme,
        dt: c.meta_f64("dt")?,
    })
}
