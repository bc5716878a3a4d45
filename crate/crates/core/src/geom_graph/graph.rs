//! Red/blue colorings of `K_n` stored as packed blue-adjacency bit rows, and
//! their text serialization.
//!
//! # File format
//!
//! ```text
//! gauss-ramsey-graph v1
//! n=<vertices>
//! sampler=<direct|bartlett|binomial|external>
//! d=<dimension|none>
//! p=<float|none>
//! c_p=<float|none>
//! seed=<u64|none>
//! stream=<u64|none>
//! <row 0>
//! ...
//! <row n-1>
//! end
//! ```
//!
//! Each row is `ceil(n/64)` words printed as 16 lowercase hex digits each,
//! word 0 first. Bit `b` of word `w` in row `i` is set iff `{i, 64w+b}` is
//! blue. Floats use 17 significant digits (`{:.16e}`). Lines end in `\n`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::Color;

pub const GRAPH_MAGIC: &str = "gauss-ramsey-graph v1";

/// Where a coloring came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub sampler: String,
    pub d: Option<usize>,
    pub p: Option<f64>,
    pub c_p: Option<f64>,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
}

impl Provenance {
    pub fn external() -> Self {
        Provenance {
            sampler: "external".to_string(),
            d: None,
            p: None,
            c_p: None,
            seed: None,
            stream: None,
        }
    }
}

/// A 2-coloring of the edges of `K_n`: blue pairs are set bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredGraph {
    n: usize,
    words: usize,
    rows: Vec<u64>,
    pub provenance: Provenance,
}

pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(64).max(1)
}

impl ColoredGraph {
    /// All pairs of one color.
    pub fn complete(n: usize, color: Color) -> Self {
        let mut g = ColoredGraph {
            n,
            words: words_for(n),
            rows: vec![0; n * words_for(n)],
            provenance: Provenance::external(),
        };
        if color == Color::Blue {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        g.set_bit(i, j);
                    }
                }
            }
        }
        g
    }

    /// All red, except the listed blue pairs.
    pub fn from_blue_edges(n: usize, blue: &[(usize, usize)]) -> Self {
        let mut g = ColoredGraph::complete(n, Color::Red);
        for &(i, j) in blue {
            g.set_color(i, j, Color::Blue);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words_per_row(&self) -> usize {
        self.words
    }

    fn set_bit(&mut self, i: usize, j: usize) {
        self.rows[i * self.words + j / 64] |= 1u64 << (j % 64);
    }

    fn clear_bit(&mut self, i: usize, j: usize) {
        self.rows[i * self.words + j / 64] &= !(1u64 << (j % 64));
    }

    pub fn set_color(&mut self, i: usize, j: usize, color: Color) {
        assert!(
            i != j && i < self.n && j < self.n,
            "pair ({i}, {j}) is not an edge of K_{}",
            self.n
        );
        match color {
            Color::Blue => {
                self.set_bit(i, j);
                self.set_bit(j, i);
            }
            Color::Red => {
                self.clear_bit(i, j);
                self.clear_bit(j, i);
            }
        }
    }

    pub fn is_blue(&self, i: usize, j: usize) -> bool {
        self.rows[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn color(&self, i: usize, j: usize) -> Color {
        if self.is_blue(i, j) {
            Color::Blue
        } else {
            Color::Red
        }
    }

    pub fn blue_row(&self, i: usize) -> &[u64] {
        &self.rows[i * self.words..(i + 1) * self.words]
    }

    /// Neighborhood of `i` in the given color, as packed bits.
    pub fn color_row(&self, i: usize, color: Color) -> Vec<u64> {
        let row = self.blue_row(i);
        match color {
            Color::Blue => row.to_vec(),
            Color::Red => {
                let mut out: Vec<u64> = row.iter().map(|w| !w).collect();
                for (w, word) in out.iter_mut().enumerate() {
                    *word &= valid_mask(self.n, w);
                }
                out[i / 64] &= !(1u64 << (i % 64));
                out
            }
        }
    }

    pub fn blue_edge_count(&self) -> usize {
        self.rows.iter().map(|w| w.count_ones() as usize).sum::<usize>() / 2
    }

    /// The coloring with vertex `v` renamed to `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let mut g = ColoredGraph::complete(self.n, Color::Red);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.is_blue(i, j) {
                    g.set_color(perm[i], perm[j], Color::Blue);
                }
            }
        }
        g.provenance = self.provenance.clone();
        g
    }

    /// Serialize in the documented hex-row format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(GRAPH_MAGIC);
        out.push('\n');
        let pr = &self.provenance;
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "sampler={}", pr.sampler);
        let _ = writeln!(out, "d={}", opt(pr.d.map(|v| v.to_string())));
        let _ = writeln!(out, "p={}", opt(pr.p.map(fmt_f64)));
        let _ = writeln!(out, "c_p={}", opt(pr.c_p.map(fmt_f64)));
        let _ = writeln!(out, "seed={}", opt(pr.seed.map(|v| v.to_string())));
        let _ = writeln!(out, "stream={}", opt(pr.stream.map(|v| v.to_string())));
        for i in 0..self.n {
            for w in self.blue_row(i) {
                let _ = write!(out, "{w:016x}");
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    /// Parse the hex-row format, rejecting asymmetric rows, self-loops and
    /// bits beyond `n`.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (g, _) = parse_graph_block(&mut lines)?;
        match lines.next() {
            None => Ok(g),
            Some((line, _)) => Err(Error::parse(line, "trailing content after end")),
        }
    }
}

pub(crate) fn valid_mask(n: usize, word: usize) -> u64 {
    let lo = word * 64;
    if n >= lo + 64 {
        u64::MAX
    } else if n <= lo {
        0
    } else {
        (1u64 << (n - lo)) - 1
    }
}

/// `{:.16e}`: 17 significant digits, round-trips through `str::parse`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(v: Option<String>) -> String {
    v.unwrap_or_else(|| "none".to_string())
}

pub(crate) fn expect_key<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
) -> Result<(usize, &'a str)> {
    let (line, text) = lines
        .next()
        .ok_or_else(|| Error::parse(0, format!("unexpected end of input, expected {key}=")))?;
    let value = text
        .strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::parse(line, format!("expected {key}=..., got {text:?}")))?;
    Ok((line, value))
}

fn parse_opt<T: std::str::FromStr>(line: usize, value: &str) -> Result<Option<T>> {
    if value == "none" {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| Error::parse(line, format!("cannot parse value {value:?}")))
}

/// Parse one graph block starting at its magic line. Returns the graph and
/// the line number of its `end` marker.
pub(crate) fn parse_graph_block<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(ColoredGraph, usize)> {
    let (line, magic) = lines.next().ok_or_else(|| Error::parse(1, "empty input"))?;
    if magic != GRAPH_MAGIC {
        return Err(Error::parse(line, format!("expected {GRAPH_MAGIC:?}")));
    }
    let (line, v) = expect_key(lines, "n")?;
    let n: usize = v.parse().map_err(|_| Error::parse(line, "bad vertex count"))?;
    if n == 0 {
        return Err(Error::parse(line, "n must be >= 1"));
    }
    let (_, sampler) = expect_key(lines, "sampler")?;
    let (line, v) = expect_key(lines, "d")?;
    let d = parse_opt(line, v)?;
    let (line, v) = expect_key(lines, "p")?;
    let p = parse_opt(line, v)?;
    let (line, v) = expect_key(lines, "c_p")?;
    let c_p = parse_opt(line, v)?;
    let (line, v) = expect_key(lines, "seed")?;
    let seed = parse_opt(line, v)?;
    let (line, v) = expect_key(lines, "stream")?;
    let stream = parse_opt(line, v)?;

    let words = words_for(n);
    let mut rows = Vec::with_capacity(n * words);
    for i in 0..n {
        let (line, text) = lines
            .next()
            .ok_or_else(|| Error::parse(0, format!("missing adjacency row {i}")))?;
        if text.len() != 16 * words {
            return Err(Error::parse(
                line,
                format!("row {i} must have {} hex digits", 16 * words),
            ));
        }
        for w in 0..words {
            let chunk = &text[16 * w..16 * (w + 1)];
            if !chunk.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                return Err(Error::parse(line, "rows use lowercase hex digits"));
            }
            let word = u64::from_str_radix(chunk, 16).map_err(|_| Error::parse(line, "bad hex word"))?;
            if word & !valid_mask(n, w) != 0 {
                return Err(Error::parse(line, format!("row {i} has bits beyond vertex {}", n - 1)));
            }
            rows.push(word);
        }
    }
    let (end_line, end) = lines.next().ok_or_else(|| Error::parse(0, "missing end marker"))?;
    if end != "end" {
        return Err(Error::parse(end_line, "expected end"));
    }
    let g = ColoredGraph {
        n,
        words,
        rows,
        provenance: Provenance {
            sampler: sampler.to_string(),
            d,
            p,
            c_p,
            seed,
            stream,
        },
    };
    for i in 0..n {
        if g.is_blue(i, i) {
            return Err(Error::parse(end_line, format!("self-loop at vertex {i}")));
        }
        for j in (i + 1)..n {
            if g.is_blue(i, j) != g.is_blue(j, i) {
                return Err(Error::parse(end_line, format!("asymmetric pair ({i}, {j})")));
            }
        }
    }
    Ok((g, end_line))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pentagon() -> ColoredGraph {
        ColoredGraph::from_blue_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    }

    #[test]
    fn text_layout_is_stable() {
        let mut g = pentagon();
        g.provenance.p = Some(0.5);
        let text = g.to_text();
        let expected = "gauss-ramsey-graph v1\nn=5\nsampler=external\nd=none\np=5.0000000000000000e-1\nc_p=none\nseed=none\nstream=none\n\
0000000000000012\n0000000000000005\n000000000000000a\n0000000000000014\n0000000000000009\nend\n";
        assert_eq!(text, expected);
        assert_eq!(ColoredGraph::from_text(&text).unwrap(), g);
    }

    #[test]
    fn parser_rejects_corruption() {
        let text = pentagon().to_text();
        // asymmetric: flip one bit in row 0 only
        let bad = text.replace("0000000000000012\n", "0000000000000016\n");
        assert!(ColoredGraph::from_text(&bad).is_err());
        // self loop on vertex 0 in row 0
        let bad = text.replace("0000000000000012\n", "0000000000000013\n");
        assert!(ColoredGraph::from_text(&bad).is_err());
        // bit beyond n
        let bad = text.replace("0000000000000012\n", "0000000000000032\n");
        assert!(ColoredGraph::from_text(&bad).is_err());
        assert!(ColoredGraph::from_text(&text.replace("end\n", "")).is_err());
        assert!(ColoredGraph::from_text(&text.replace("n=5", "n=x")).is_err());
        assert!(ColoredGraph::from_text(&format!("{text}extra\n")).is_err());
    }

    #[test]
    fn red_rows_exclude_self_and_padding() {
        let g = pentagon();
        assert_eq!(g.color_row(0, Color::Red), vec![0b01100]);
        assert_eq!(g.color_row(0, Color::Blue), vec![0b10010]);
        assert_eq!(g.blue_edge_count(), 5);
        let big = ColoredGraph::complete(70, Color::Red);
        let row = big.color_row(69, Color::Red);
        assert_eq!(row[0], u64::MAX);
        assert_eq!(row[1], 0b11_1111 & !(1 << 5));
    }

    proptest! {
        #[test]
        fn text_round_trip(n in 1usize..140, bits in proptest::collection::vec(any::<bool>(), 0..10_000), seed in any::<u64>()) {
            let mut g = ColoredGraph::complete(n, Color::Red);
            let mut it = bits.iter().cycle();
            for i in 0..n {
                for j in (i + 1)..n {
                    if *it.next().unwrap_or(&false) {
                        g.set_color(i, j, Color::Blue);
                    }
                }
            }
            g.provenance = Provenance { sampler: "direct".into(), d: Some(17), p: Some(0.381_966), c_p: Some(0.3003), seed: Some(seed), stream: Some(3) };
            let text = g.to_text();
            let back = ColoredGraph::from_text(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
