//! Exact monochromatic clique search, witness colorings and certificates.
//!
//! A coloring of `K_n` with no red `K_ℓ` and no blue `K_k` shows
//! `R(ℓ, k) > n`. The search engine is complete: a `None` answer means no
//! such clique exists.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian_core::RngStream;
use crate::geom_graph::graph::{expect_key, parse_graph_block, words_for};
use crate::geom_graph::{sample_geometric_graph, ColoredGraph, Provenance, Sampler};
use crate::parallel::map_chunks;
use crate::Color;

/// Default word budget per adjacency row (512 vertices).
pub const DEFAULT_WORD_BUDGET: usize = 8;

type Bits = Vec<u64>;

fn popcount(b: &[u64]) -> usize {
    b.iter().map(|w| w.count_ones() as usize).sum()
}

fn first_bit(b: &[u64]) -> Option<usize> {
    b.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map(|(i, w)| 64 * i + w.trailing_zeros() as usize)
}

fn clear(b: &mut [u64], v: usize) {
    b[v / 64] &= !(1u64 << (v % 64));
}

fn set(b: &mut [u64], v: usize) {
    b[v / 64] |= 1u64 << (v % 64);
}

fn and(a: &[u64], b: &[u64]) -> Bits {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

/// Vertex order of repeated minimum-degree removal.
fn degeneracy_order(adj: &[Bits], n: usize) -> Vec<usize> {
    let mut deg: Vec<usize> = adj.iter().map(|r| popcount(r)).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !removed[v])
            .min_by_key(|&v| (deg[v], v))
            .expect("vertices remain");
        removed[v] = true;
        order.push(v);
        for u in 0..n {
            if !removed[u] && adj[v][u / 64] >> (u % 64) & 1 == 1 {
                deg[u] -= 1;
            }
        }
    }
    order
}

/// Number of colors a greedy coloring of `cand` uses; an upper bound on the
/// largest clique inside `cand`.
fn greedy_color_bound(adj: &[Bits], cand: &[u64]) -> usize {
    let mut uncolored = cand.to_vec();
    let mut colors = 0;
    while popcount(&uncolored) > 0 {
        colors += 1;
        let mut avail = uncolored.clone();
        while let Some(v) = first_bit(&avail) {
            clear(&mut uncolored, v);
            clear(&mut avail, v);
            for (a, m) in avail.iter_mut().zip(&adj[v]) {
                *a &= !m;
            }
        }
    }
    colors
}

fn extend(adj: &[Bits], mut cand: Bits, clique: &mut Vec<usize>, size: usize) -> bool {
    if clique.len() == size {
        return true;
    }
    let need = size - clique.len();
    if popcount(&cand) < need || greedy_color_bound(adj, &cand) < need {
        return false;
    }
    while let Some(v) = first_bit(&cand) {
        if popcount(&cand) < need {
            return false;
        }
        clique.push(v);
        if extend(adj, and(&cand, &adj[v]), clique, size) {
            return true;
        }
        clique.pop();
        clear(&mut cand, v);
    }
    false
}

/// A clique of `size` vertices all of whose pairs have `color`, or `None`
/// when there is none.
pub fn find_mono_clique(g: &ColoredGraph, size: usize, color: Color) -> Result<Option<Vec<usize>>> {
    find_mono_clique_with_budget(g, size, color, DEFAULT_WORD_BUDGET)
}

pub fn find_mono_clique_with_budget(
    g: &ColoredGraph,
    size: usize,
    color: Color,
    budget: usize,
) -> Result<Option<Vec<usize>>> {
    let n = g.n();
    let words = words_for(n);
    if words > budget {
        return Err(Error::Capability { n, words, budget });
    }
    if size == 0 {
        return Err(Error::domain("find_mono_clique", "size must be >= 1"));
    }
    if size > n {
        return Ok(None);
    }
    if size == 1 {
        return Ok(Some(vec![0]));
    }
    // Relabel by degeneracy order; vertex v gets the position of v in it.
    let raw: Vec<Bits> = (0..n).map(|i| g.color_row(i, color)).collect();
    let order = degeneracy_order(&raw, n);
    let mut pos = vec![0; n];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    let mut adj = vec![vec![0u64; words]; n];
    for i in 0..n {
        for j in 0..n {
            if raw[i][j / 64] >> (j % 64) & 1 == 1 {
                set(&mut adj[pos[i]], pos[j]);
            }
        }
    }
    // Each clique is found from its earliest vertex with later neighbors
    // as candidates; that set has at most `degeneracy` members.
    for v in 0..n {
        let mut later = vec![0u64; words];
        for u in (v + 1)..n {
            set(&mut later, u);
        }
        let cand = and(&later, &adj[v]);
        let mut clique = vec![v];
        if extend(&adj, cand, &mut clique, size) {
            let mut found: Vec<usize> = clique.iter().map(|&k| order[k]).collect();
            found.sort_unstable();
            return Ok(Some(found));
        }
    }
    Ok(None)
}

/// A coloring checked for the absence of red `K_ell` and blue `K_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessCertificate {
    pub n: usize,
    pub ell: usize,
    pub k: usize,
    pub graph: ColoredGraph,
    /// True iff the complete search found neither clique.
    pub checked: bool,
    pub red_clique: Option<Vec<usize>>,
    pub blue_clique: Option<Vec<usize>>,
    /// Search attempt that produced the coloring, when known.
    pub attempt: Option<u64>,
    pub seed: Option<u64>,
}

pub fn verify_witness(g: &ColoredGraph, ell: usize, k: usize) -> Result<WitnessCertificate> {
    if ell == 0 || k == 0 {
        return Err(Error::domain("verify_witness", "need ell >= 1 and k >= 1"));
    }
    let red_clique = find_mono_clique(g, ell, Color::Red)?;
    let blue_clique = if red_clique.is_some() {
        None
    } else {
        find_mono_clique(g, k, Color::Blue)?
    };
    Ok(WitnessCertificate {
        n: g.n(),
        ell,
        k,
        graph: g.clone(),
        checked: red_clique.is_none() && blue_clique.is_none(),
        red_clique,
        blue_clique,
        attempt: None,
        seed: None,
    })
}

/// How search attempts draw colorings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WitnessSampler {
    /// `G(n, d, p)`: blue pairs are geometric edges.
    Geometric { d: usize, p: f64, sampler: Sampler },
    /// Each pair independently red with probability `p`.
    Binomial { p: f64 },
}

pub fn sample_binomial_coloring(n: usize, p: f64, seed: u64, stream_id: u64) -> ColoredGraph {
    let mut stream = RngStream::new(seed, stream_id);
    let mut g = ColoredGraph::complete(n, Color::Blue);
    for i in 0..n {
        for j in (i + 1)..n {
            if stream.random::<f64>() < p {
                g.set_color(i, j, Color::Red);
            }
        }
    }
    g.provenance = Provenance {
        sampler: "binomial".to_string(),
        d: None,
        p: Some(p),
        c_p: None,
        seed: Some(seed),
        stream: Some(stream_id),
    };
    g
}

fn sample_attempt(n: usize, sampler: WitnessSampler, seed: u64, attempt: u64) -> Result<ColoredGraph> {
    match sampler {
        WitnessSampler::Geometric { d, p, sampler } => sample_geometric_graph(n, d, p, sampler, seed, attempt),
        WitnessSampler::Binomial { p } => Ok(sample_binomial_coloring(n, p, seed, attempt)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub certificate: Option<WitnessCertificate>,
    /// Attempts up to and including the successful one, or all of them.
    pub attempts: u64,
    pub seed: u64,
}

/// Attempts per parallel batch; the lowest successful index in a batch wins.
const SEARCH_BATCH: usize = 8192;

/// Sample colorings from attempt streams `(seed, 0), (seed, 1), …` until one
/// verifies. The result is the lowest verified attempt index.
pub fn search_witness(
    n: usize,
    ell: usize,
    k: usize,
    sampler: WitnessSampler,
    max_attempts: u64,
    seed: u64,
) -> Result<SearchOutcome> {
    if n == 0 || ell == 0 || k == 0 {
        return Err(Error::domain("search_witness", "need n, ell, k >= 1"));
    }
    let words = words_for(n);
    if words > DEFAULT_WORD_BUDGET {
        return Err(Error::Capability {
            n,
            words,
            budget: DEFAULT_WORD_BUDGET,
        });
    }
    match sampler {
        WitnessSampler::Geometric { d, p, sampler } => {
            if !(p > 0.0 && p <= 0.5) || d == 0 || (sampler == Sampler::Bartlett && n > d) {
                return Err(Error::domain(
                    "search_witness",
                    "need 0 < p <= 1/2, d >= 1 (and n <= d for bartlett)",
                ));
            }
        }
        WitnessSampler::Binomial { p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::domain("search_witness", "need 0 <= p <= 1"));
            }
        }
    }
    let mut start = 0u64;
    while start < max_attempts {
        let len = (max_attempts - start).min(SEARCH_BATCH as u64) as usize;
        let found = map_chunks(len, |range| -> Result<Option<WitnessCertificate>> {
            for i in range {
                let attempt = start + i as u64;
                let g = sample_attempt(n, sampler, seed, attempt)?;
                let mut cert = verify_witness(&g, ell, k)?;
                if cert.checked {
                    cert.attempt = Some(attempt);
                    cert.seed = Some(seed);
                    return Ok(Some(cert));
                }
            }
            Ok(None)
        });
        for chunk in found {
            if let Some(cert) = chunk? {
                let attempts = cert.attempt.expect("set above") + 1;
                return Ok(SearchOutcome {
                    certificate: Some(cert),
                    attempts,
                    seed,
                });
            }
        }
        start += len as u64;
    }
    Ok(SearchOutcome {
        certificate: None,
        attempts: max_attempts,
        seed,
    })
}

pub const CERT_MAGIC: &str = "gauss-ramsey-certificate v1";

fn opt_u64(v: Option<u64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl WitnessCertificate {
    /// Header lines `ell=`, `k=`, `attempt=`, `seed=` followed by the graph
    /// in the hex-row format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(CERT_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "ell={}", self.ell);
        let _ = writeln!(out, "k={}", self.k);
        let _ = writeln!(out, "attempt={}", opt_u64(self.attempt));
        let _ = writeln!(out, "seed={}", opt_u64(self.seed));
        out.push_str(&self.graph.to_text());
        out
    }

    /// Parse a certificate and re-run the complete search on its graph.
    /// `checked` reflects that search, never the file.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, CERT_MAGIC)) => {}
            Some((line, _)) => return Err(Error::parse(line, format!("expected {CERT_MAGIC:?}"))),
            None => return Err(Error::parse(1, "empty input")),
        }
        let mut num = |key: &str| -> Result<Option<u64>> {
            let (line, v) = expect_key(&mut lines, key)?;
            if v == "none" {
                return Ok(None);
            }
            v.parse()
                .map(Some)
                .map_err(|_| Error::parse(line, format!("bad {key} value {v:?}")))
        };
        let ell = num("ell")?.ok_or_else(|| Error::parse(2, "ell is required"))? as usize;
        let k = num("k")?.ok_or_else(|| Error::parse(3, "k is required"))? as usize;
        let attempt = num("attempt")?;
        let seed = num("seed")?;
        let (graph, _) = parse_graph_block(&mut lines)?;
        if let Some((line, _)) = lines.next() {
            return Err(Error::parse(line, "trailing content after end"));
        }
        let mut cert = verify_witness(&graph, ell, k)?;
        cert.attempt = attempt;
        cert.seed = seed;
        Ok(cert)
    }
}
