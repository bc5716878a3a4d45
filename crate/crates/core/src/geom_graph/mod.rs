//! Samplers for the geometric model, Gram and adjacency construction, and
//! perfect sequences.
//!
//! Two samplers produce the same joint law of inner products:
//!
//! * the direct sampler draws an `n × d` cloud with `N(0, 1/d)` coordinates;
//! * the triangular (Bartlett) sampler draws an `r × r` lower-triangular
//!   matrix whose row `i` (0-based) has `i` entries `N(0, 1/d)` and diagonal
//!   `sqrt(χ²_{d-i} / d)`. It needs only `O(r²)` draws.

pub mod graph;
pub mod perfect;

pub use graph::{fmt_f64, ColoredGraph, Provenance};
pub use perfect::{extract_perfect, is_perfect, Extraction, PerfectReport, PerfectSpec, SequenceGeometry, Violation};

use crate::error::{Error, Result};
use crate::gaussian_core::{sample_chi, sample_normal, RngStream};
use crate::Color;

/// `n` points in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub n: usize,
    pub d: usize,
    pub coords: Vec<f64>,
}

impl PointCloud {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::domain(
                "PointCloud",
                "rows must be non-empty and of equal length",
            ));
        }
        Ok(PointCloud {
            n,
            d,
            coords: rows.concat(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }
}

pub fn sample_cloud(n: usize, d: usize, stream: &mut RngStream) -> Result<PointCloud> {
    if n == 0 || d == 0 {
        return Err(Error::domain("sample_cloud", "need n >= 1 and d >= 1"));
    }
    let var = 1.0 / d as f64;
    let coords = (0..n * d).map(|_| sample_normal(stream, var)).collect();
    Ok(PointCloud { n, d, coords })
}

/// Dense symmetric matrix; `get(i, j) == get(j, i)` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Fill from `f(i, j)` evaluated once per unordered pair `i <= j`.
    pub fn from_upper(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymMatrix { n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn gram(cloud: &PointCloud) -> SymMatrix {
    SymMatrix::from_upper(cloud.n, |i, j| dot(cloud.row(i), cloud.row(j)))
}

/// The blue/red coloring: `{i, j}` is blue iff `gram(i, j) >= -c_p / sqrt(d)`.
pub fn adjacency(gram: &SymMatrix, c_p: f64, d: usize) -> Result<ColoredGraph> {
    if !(c_p >= 0.0) || d == 0 {
        return Err(Error::domain("adjacency", "need c_p >= 0 and d >= 1"));
    }
    let threshold = -c_p / (d as f64).sqrt();
    let mut g = ColoredGraph::complete(gram.n, Color::Red);
    for i in 0..gram.n {
        for j in (i + 1)..gram.n {
            if gram.get(i, j) >= threshold {
                g.set_color(i, j, Color::Blue);
            }
        }
    }
    g.provenance.d = Some(d);
    g.provenance.c_p = Some(c_p);
    Ok(g)
}

/// Lower-triangular `r × r` matrix whose rows have the joint inner-product
/// law of `r` points of the direct sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSample {
    pub r: usize,
    pub d: usize,
    m: Vec<f64>,
}

impl TriangularSample {
    pub fn from_matrix(d: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 || r > d {
            return Err(Error::domain("TriangularSample", "need 1 <= r <= d"));
        }
        let mut m = vec![0.0; r * r];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != r {
                return Err(Error::domain("TriangularSample", "matrix must be square"));
            }
            for (j, &v) in row.iter().enumerate() {
                if j > i && v != 0.0 {
                    return Err(Error::domain(
                        "TriangularSample",
                        "entries above the diagonal must be zero",
                    ));
                }
                if j == i && v < 0.0 {
                    return Err(Error::domain("TriangularSample", "diagonal must be nonnegative"));
                }
                m[i * r + j] = v;
            }
        }
        Ok(TriangularSample { r, d, m })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.r + j]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    /// Row `i` truncated to its `i + 1` possibly nonzero entries.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.m[i * self.r..i * self.r + i + 1]
    }

    /// The strictly-below-diagonal part of column `i`.
    pub fn column_below(&self, i: usize) -> Vec<f64> {
        ((i + 1)..self.r).map(|k| self.get(k, i)).collect()
    }
}

pub fn sample_bartlett(r: usize, d: usize, stream: &mut RngStream) -> Result<TriangularSample> {
    if r == 0 || r > d {
        return Err(Error::domain(
            "sample_bartlett",
            format!("need 1 <= r <= d, got r={r}, d={d}"),
        ));
    }
    let var = 1.0 / d as f64;
    let scale = var.sqrt();
    let mut m = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..i {
            m[i * r + j] = sample_normal(stream, var);
        }
        m[i * r + i] = sample_chi(d - i, stream)? * scale;
    }
    Ok(TriangularSample { r, d, m })
}

pub fn gram_from_bartlett(ts: &TriangularSample) -> SymMatrix {
    SymMatrix::from_upper(ts.r, |i, j| dot(ts.row(i), &ts.row(j)[..i + 1]))
}

/// Which sampler produces the point configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Direct,
    Bartlett,
}

impl Sampler {
    pub fn as_str(self) -> &'static str {
        match self {
            Sampler::Direct => "direct",
            Sampler::Bartlett => "bartlett",
        }
    }
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Sampler::Direct),
            "bartlett" => Ok(Sampler::Bartlett),
            other => Err(Error::domain(
                "sampler",
                format!("expected direct|bartlett, got {other:?}"),
            )),
        }
    }
}

/// Sample one `G(n, d, p)` coloring from stream `(seed, stream_id)`, with
/// provenance recorded.
pub fn sample_geometric_graph(
    n: usize,
    d: usize,
    p: f64,
    sampler: Sampler,
    seed: u64,
    stream_id: u64,
) -> Result<ColoredGraph> {
    let c_p = crate::analytic::solve_c_p(p)?;
    let mut stream = RngStream::new(seed, stream_id);
    let g = match sampler {
        Sampler::Direct => gram(&sample_cloud(n, d, &mut stream)?),
        Sampler::Bartlett => gram_from_bartlett(&sample_bartlett(n, d, &mut stream)?),
    };
    let mut graph = adjacency(&g, c_p, d)?;
    graph.provenance = Provenance {
        sampler: sampler.as_str().to_string(),
        d: Some(d),
        p: Some(p),
        c_p: Some(c_p),
        seed: Some(seed),
        stream: Some(stream_id),
    };
    Ok(graph)
}
