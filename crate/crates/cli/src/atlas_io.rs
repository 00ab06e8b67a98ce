//! Reach-atlas JSON files. Matrices are stored row-major and every number is
//! written with 17 significant digits so a save/load cycle is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use infoplan_core::safety::{AtlasSource, ReachAtlas, ReachInterval};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

pub const ATLAS_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum AtlasError {
    #[error("cannot read atlas {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed atlas document: {0}")]
    Parse(String),
    #[error("unsupported atlas version {0}; expected 1")]
    Version(u32),
    #[error("atlas dimension error: {0}")]
    Dimension(String),
    #[error("atlas contains a non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid atlas: {0}")]
    Invalid(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtlas {
    version: u32,
    n_world: usize,
    dim_k: usize,
    intervals: Vec<RawInterval>,
    metadata: RawMetadata,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterval {
    j: usize,
    t_start: f64,
    t_end: f64,
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<f64>,
    #[serde(rename = "G")]
    g: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetadata {
    source: String,
    bloat: f64,
}

/// Parses an atlas document.
pub fn parse_atlas(text: &str) -> Result<ReachAtlas, AtlasError> {
    let raw: RawAtlas = serde_json::from_str(text).map_err(|e| AtlasError::Parse(e.to_string()))?;
    if raw.version != ATLAS_VERSION {
        return Err(AtlasError::Version(raw.version));
    }
    let source = match raw.metadata.source.as_str() {
        "file" => AtlasSource::File,
        "empirical" => AtlasSource::Empirical,
        other => return Err(AtlasError::Invalid(format!("unknown source {other:?}"))),
    };
    let (w, p) = (raw.n_world, raw.dim_k);
    if w == 0 {
        return Err(AtlasError::Dimension("n_world must be positive".into()));
    }
    let mut intervals = Vec::with_capacity(raw.intervals.len());
    for (n, iv) in raw.intervals.into_iter().enumerate() {
        if iv.c.len() != w {
            return Err(AtlasError::Dimension(format!(
                "interval {n}: c has {} entries, expected n_world = {w}",
                iv.c.len()
            )));
        }
        if iv.a.len() != w * p {
            return Err(AtlasError::Dimension(format!(
                "interval {n}: A has {} entries, expected n_world x dim_k = {}",
                iv.a.len(),
                w * p
            )));
        }
        if iv.g.len() % w != 0 {
            return Err(AtlasError::Dimension(format!(
                "interval {n}: G has {} entries, not a multiple of n_world = {w}",
                iv.g.len()
            )));
        }
        let fields = [("t_start", &[iv.t_start][..]), ("t_end", &[iv.t_end][..]), ("c", &iv.c), ("A", &iv.a), ("G", &iv.g)];
        for (name, vals) in fields {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(AtlasError::NonFinite(format!("interval {n} field {name}")));
            }
        }
        intervals.push(ReachInterval {
            j: iv.j,
            t_start: iv.t_start,
            t_end: iv.t_end,
            c: DVector::from_vec(iv.c),
            a: DMatrix::from_row_slice(w, p, &iv.a),
            g: DMatrix::from_row_slice(w, iv.g.len() / w, &iv.g),
        });
    }
    if !raw.metadata.bloat.is_finite() {
        return Err(AtlasError::NonFinite("metadata bloat".into()));
    }
    ReachAtlas::new(w, p, intervals, source, raw.metadata.bloat).map_err(|e| match e {
        infoplan_core::Error::DimensionMismatch { .. } => AtlasError::Dimension(e.to_string()),
        infoplan_core::Error::NonFinite(what) => AtlasError::NonFinite(what.into()),
        other => AtlasError::Invalid(other.to_string()),
    })
}

pub fn load_atlas(path: &Path) -> Result<ReachAtlas, AtlasError> {
    let text = std::fs::read_to_string(path).map_err(|source| AtlasError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_atlas(&text)
}

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a string");
}

fn nums<'a>(out: &mut String, vals: impl IntoIterator<Item = &'a f64>) {
    out.push('[');
    for (i, v) in vals.into_iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        num(out, *v);
    }
    out.push(']');
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Serializes an atlas to its JSON document.
pub fn atlas_to_string(atlas: &ReachAtlas) -> String {
    let mut s = String::new();
    writeln!(s, "{{").unwrap();
    writeln!(s, "  \"version\": {ATLAS_VERSION},").unwrap();
    writeln!(s, "  \"n_world\": {},", atlas.n_world()).unwrap();
    writeln!(s, "  \"dim_k\": {},", atlas.dim_k()).unwrap();
    let source = match atlas.source() {
        AtlasSource::File => "file",
        AtlasSource::Empirical => "empirical",
    };
    s.push_str("  \"metadata\": {\"source\": \"");
    s.push_str(source);
    s.push_str("\", \"bloat\": ");
    num(&mut s, atlas.bloat());
    s.push_str("},\n  \"intervals\": [");
    for (n, iv) in atlas.intervals().iter().enumerate() {
        s.push_str(if n == 0 { "\n" } else { ",\n" });
        write!(s, "    {{\"j\": {}, \"t_start\": ", iv.j).unwrap();
        num(&mut s, iv.t_start);
        s.push_str(", \"t_end\": ");
        num(&mut s, iv.t_end);
        s.push_str(",\n     \"c\": ");
        nums(&mut s, iv.c.iter());
        s.push_str(",\n     \"A\": ");
        nums(&mut s, &row_major(&iv.a));
        s.push_str(",\n     \"G\": ");
        nums(&mut s, &row_major(&iv.g));
        s.push('}');
    }
    s.push_str("\n  ]\n}\n");
    s
}

pub fn save_atlas(atlas: &ReachAtlas, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, atlas_to_string(atlas))
}
