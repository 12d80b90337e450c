//! File emitters: CSV tables, SVG plots, the binary Wigner format and the
//! run manifest.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::quantum::WignerData;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Header plus rows. Numbers use Rust's shortest round-trip formatting, so
/// identical data always give identical bytes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&v| Cell::Num(v)).collect());
    }

    pub fn render(&self) -> anyhow::Result<String> {
        let mut out = self.header.join(",");
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                bail!("row {i} has {} cells, header has {}", row.len(), self.header.len());
            }
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| match c {
                    Cell::Num(v) if !v.is_finite() => {
                        bail!("non-finite value {v} in row {i}, column `{}`", self.header[j])
                    }
                    Cell::Num(v) => Ok(format!("{v}")),
                    Cell::Text(t) => Ok(t.clone()),
                    Cell::Empty => Ok(String::new()),
                })
                .collect::<anyhow::Result<_>>()?;
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

/// Collects emitted files so the manifest can list them with checksums.
#[derive(Debug)]
pub struct Emitter {
    dir: PathBuf,
    files: Vec<EmittedFile>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Emitter {
    pub fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[EmittedFile] {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, data: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut f = std::fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        f.write_all(data)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(EmittedFile {
            path: name.to_string(),
            bytes: data.len() as u64,
            sha256: sha256_hex(data),
        });
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, table: &CsvTable) -> anyhow::Result<PathBuf> {
        let text = table.render().with_context(|| format!("refusing to write {name}"))?;
        self.write_bytes(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, svg: &str) -> anyhow::Result<PathBuf> {
        self.write_bytes(name, svg.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    pub config_sha256: String,
    pub wall_time_s: f64,
    pub files: Vec<EmittedFile>,
}

pub const WIGNER_MAGIC: &[u8; 4] = b"WGNR";
pub const WIGNER_VERSION: u32 = 1;
pub const WIGNER_HEADER_LEN: usize = 64;

/// 64-byte little-endian header (magic, version, nx, nξ, dx, dξ, ε, x₀, ξ₀)
/// followed by `nx·nξ` doubles, x-major.
pub fn encode_wigner(w: &WignerData, values: &[f64]) -> anyhow::Result<Vec<u8>> {
    if values.len() != w.nx * w.nxi {
        bail!("Wigner array has {} values, expected {}", values.len(), w.nx * w.nxi);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        bail!("non-finite Wigner value at index {i}");
    }
    let mut out = Vec::with_capacity(WIGNER_HEADER_LEN + 8 * values.len());
    out.extend_from_slice(WIGNER_MAGIC);
    out.extend_from_slice(&WIGNER_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.nx as u64).to_le_bytes());
    out.extend_from_slice(&(w.nxi as u64).to_le_bytes());
    for v in [w.dx, w.dxi, w.eps, w.x0, w.xi0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    debug_assert_eq!(out.len(), WIGNER_HEADER_LEN);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_wigner`]; per-mode arrays are not part of the format.
pub fn decode_wigner(bytes: &[u8]) -> anyhow::Result<WignerData> {
    if bytes.len() < WIGNER_HEADER_LEN || &bytes[..4] != WIGNER_MAGIC {
        bail!("not a Wigner file");
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != WIGNER_VERSION {
        bail!("unsupported Wigner file version {version}");
    }
    let nx = u64_at(8) as usize;
    let nxi = u64_at(16) as usize;
    let count = nx.checked_mul(nxi).context("Wigner dimensions overflow")?;
    if bytes.len() != WIGNER_HEADER_LEN + 8 * count {
        bail!("Wigner file length {} does not match {nx}×{nxi}", bytes.len());
    }
    let total = (0..count).map(|i| f64_at(WIGNER_HEADER_LEN + 8 * i)).collect();
    Ok(WignerData {
        eps: f64_at(40),
        nx,
        nxi,
        x0: f64_at(48),
        dx: f64_at(24),
        xi0: f64_at(56),
        dxi: f64_at(32),
        total,
        modes: Vec::new(),
    })
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn frame(svg: &mut String, title: &str, x_label: &str, y_label: &str, xr: (f64, f64), yr: (f64, f64)) {
    let pw = W - MARGIN_L - MARGIN_R;
    let ph = H - MARGIN_T - MARGIN_B;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = MARGIN_L + f * pw;
        let y = MARGIN_T + ph - f * ph;
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            MARGIN_T + ph + 16.0,
            xr.0 + f * (xr.1 - xr.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0,
            yr.0 + f * (yr.1 - yr.0)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(y_label)
    );
}

/// Static line plot of one or more named series.
pub fn svg_line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> anyhow::Result<String> {
    for (name, pts) in series {
        if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            bail!("non-finite point in series `{name}`");
        }
    }
    let xr = extent(series.iter().flat_map(|(_, p)| p.iter().map(|v| v.0)));
    let yr = extent(series.iter().flat_map(|(_, p)| p.iter().map(|v| v.1)));
    let mut svg = String::new();
    frame(&mut svg, title, x_label, y_label, xr, yr);
    let pw = W - MARGIN_L - MARGIN_R;
    let ph = H - MARGIN_T - MARGIN_B;
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    MARGIN_L + (x - xr.0) / (xr.1 - xr.0) * pw,
                    MARGIN_T + ph - (y - yr.0) / (yr.1 - yr.0) * ph
                )
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            MARGIN_L + 8.0,
            MARGIN_T + 16.0 + 14.0 * k as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn diverging(v: f64) -> String {
    // blue for negative, white at 0, red for positive; v ∈ [−1, 1]
    let t = v.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Heatmap of a row-major `nx × ny` array, block-averaged to at most
/// 128×128 cells. Rows run along the horizontal axis.
#[allow(clippy::too_many_arguments)]
pub fn svg_heatmap(
    title: &str,
    x_label: &str,
    y_label: &str,
    data: &[f64],
    nx: usize,
    ny: usize,
    xr: (f64, f64),
    yr: (f64, f64),
) -> anyhow::Result<String> {
    if data.len() != nx * ny || nx == 0 || ny == 0 {
        bail!("heatmap data has {} values, expected {nx}×{ny}", data.len());
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        bail!("non-finite heatmap value at index {i}");
    }
    let bx = nx.div_ceil(128);
    let by = ny.div_ceil(128);
    let cx = nx.div_ceil(bx);
    let cy = ny.div_ceil(by);
    let mut cells = vec![0.0; cx * cy];
    let mut counts = vec![0usize; cx * cy];
    for i in 0..nx {
        for j in 0..ny {
            let k = (i / bx) * cy + j / by;
            cells[k] += data[i * ny + j];
            counts[k] += 1;
        }
    }
    for (c, n) in cells.iter_mut().zip(&counts) {
        *c /= *n as f64;
    }
    let scale = cells.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut svg = String::new();
    frame(&mut svg, title, x_label, y_label, xr, yr);
    let pw = (W - MARGIN_L - MARGIN_R) / cx as f64;
    let ph = (H - MARGIN_T - MARGIN_B) / cy as f64;
    for i in 0..cx {
        for j in 0..cy {
            let v = cells[i * cy + j] / scale;
            if v.abs() < 1e-3 {
                continue;
            }
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                MARGIN_L + i as f64 * pw,
                H - MARGIN_B - (j + 1) as f64 * ph,
                pw + 0.05,
                ph + 0.05,
                diverging(v)
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
