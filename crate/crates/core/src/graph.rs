//! Sampled graphs with a planted hidden set.
//!
//! Adjacency is stored in CSR form with sorted neighbour lists. Each directed
//! edge slot `e` (from `owner[e]` to `targets[e]`) has a reverse slot
//! `rev[e]`; belief propagation keeps one message per slot.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::seed;

/// How the hidden set is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipMode {
    /// Each vertex is a member independently with probability `kappa`.
    Bernoulli,
    /// Exactly `k` members chosen uniformly.
    FixedSize(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGraph {
    n: usize,
    kappa: f64,
    a: f64,
    b: f64,
    seed: u64,
    membership: Vec<bool>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    owner: Vec<u32>,
    rev: Vec<u32>,
}

impl PlantedGraph {
    /// Build a graph from an explicit edge list. Pairs may come in any order
    /// and orientation; self-loops and duplicates are rejected.
    pub fn from_edges(
        membership: Vec<bool>,
        edges: &[(usize, usize)],
        kappa: f64,
        a: f64,
        b: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = membership.len();
        if n > u32::MAX as usize {
            return Err(Error::InstanceTooLarge(format!("n = {n} exceeds u32 indexing")));
        }
        let mut deg = vec![0usize; n];
        for &(i, j) in edges {
            for v in [i, j] {
                if v >= n {
                    return Err(Error::InvalidSubset { vertex: v, n });
                }
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop at vertex {i}")));
            }
            deg[i] += 1;
            deg[j] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for v in 0..n {
            offsets[v + 1] = offsets[v] + deg[v];
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0u32; offsets[n]];
        for &(i, j) in edges {
            targets[fill[i]] = j as u32;
            fill[i] += 1;
            targets[fill[j]] = i as u32;
            fill[j] += 1;
        }
        let mut owner = vec![0u32; targets.len()];
        for v in 0..n {
            let adj = &mut targets[offsets[v]..offsets[v + 1]];
            adj.sort_unstable();
            if adj.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!("duplicate edge at vertex {v}")));
            }
            owner[offsets[v]..offsets[v + 1]].fill(v as u32);
        }
        let mut rev = vec![0u32; targets.len()];
        for v in 0..n {
            for e in offsets[v]..offsets[v + 1] {
                let w = targets[e] as usize;
                let adj = &targets[offsets[w]..offsets[w + 1]];
                let pos = adj.binary_search(&(v as u32)).expect("symmetric adjacency");
                rev[e] = (offsets[w] + pos) as u32;
            }
        }
        Ok(PlantedGraph { n, kappa, a, b, seed, membership, offsets, targets, owner, rev })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn membership(&self) -> &[bool] {
        &self.membership
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn num_directed(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn owner(&self) -> &[u32] {
        &self.owner
    }

    pub fn rev(&self) -> &[u32] {
        &self.rev
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Undirected edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| j as usize > i)
                .map(move |&j| (i, j as usize))
        })
    }

    /// Number of edges with both endpoints in `subset`.
    pub fn count_edges_within(&self, subset: &[usize]) -> Result<usize> {
        let mut mark = vec![false; self.n];
        for &v in subset {
            if v >= self.n {
                return Err(Error::InvalidSubset { vertex: v, n: self.n });
            }
            mark[v] = true;
        }
        let mut twice = 0usize;
        for v in (0..self.n).filter(|&v| mark[v]) {
            twice += self.neighbors(v).iter().filter(|&&w| mark[w as usize]).count();
        }
        Ok(twice / 2)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "n={} kappa={} a={} b={} seed={}",
            self.n, self.kappa, self.a, self.b, self.seed
        )?;
        let mut line = String::with_capacity(2 * self.n);
        for (i, &x) in self.membership.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push(if x { '1' } else { '0' });
        }
        writeln!(w, "{line}")?;
        let mut buf = String::new();
        for (i, j) in self.edges() {
            buf.clear();
            let _ = writeln!(buf, "{i} {j}");
            w.write_all(buf.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("ascii output")
    }

    /// Parse the text format. Lines starting with `#` are comments; error
    /// line numbers refer to the original input.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter_map(|(k, line)| match line {
            Ok(l) if l.trim_start().starts_with('#') => None,
            Ok(l) => Some(Ok((k + 1, l))),
            Err(e) => Some(Err(Error::from(e))),
        });
        let perr = |line: usize, message: String| Error::Parse { line, message };
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing header".into()))??;
        let (mut n, mut kappa, mut a, mut b, mut seed) = (None, None, None, None, None);
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| perr(hl, format!("expected key=value, got '{tok}'")))?;
            let bad = |e: String| perr(hl, format!("bad value for {k}: {e}"));
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "kappa" => kappa = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "a" => a = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "b" => b = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(perr(hl, format!("unknown header key '{k}'"))),
            }
        }
        let missing = |k: &str| perr(hl, format!("header is missing '{k}'"));
        let n = n.ok_or_else(|| missing("n"))?;
        let kappa = kappa.ok_or_else(|| missing("kappa"))?;
        let a = a.ok_or_else(|| missing("a"))?;
        let b = b.ok_or_else(|| missing("b"))?;
        let seed = seed.ok_or_else(|| missing("seed"))?;

        let (ml, bits) = lines.next().ok_or_else(|| perr(hl + 1, "missing membership line".into()))??;
        let membership = bits
            .split_whitespace()
            .map(|t| match t {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(perr(ml, format!("membership bit must be 0 or 1, got '{t}'"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if membership.len() != n {
            return Err(perr(ml, format!("expected {n} membership bits, got {}", membership.len())));
        }
        let mut edges = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for item in lines {
            let (lineno, line) = item?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| perr(lineno, "expected two vertex indices".into()))?
                    .parse::<usize>()
                    .map_err(|e| perr(lineno, e.to_string()))
            };
            let (i, j) = (next()?, next()?);
            if i >= j || j >= n {
                return Err(perr(lineno, format!("edge '{i} {j}' needs i < j < n")));
            }
            if last.is_some_and(|p| p >= (i, j)) {
                return Err(perr(lineno, "edges must be sorted and unique".into()));
            }
            last = Some((i, j));
            edges.push((i, j));
        }
        PlantedGraph::from_edges(membership, &edges, kappa, a, b, seed)
    }
}

/// Append the pairs `{list[v], list[w]}`, `w < v`, kept independently with
/// probability `p`, visiting only the kept pairs (geometric skips).
fn sample_within(list: &[usize], p: f64, rng: &mut seed::Rng, out: &mut Vec<(usize, usize)>) {
    let s = list.len();
    if p <= 0.0 || s < 2 {
        return;
    }
    let log_q = (1.0 - p).ln();
    let (mut v, mut w) = (1usize, -1i64);
    loop {
        w += 1 + skip(p, log_q, rng) as i64;
        while v < s && w >= v as i64 {
            w -= v as i64;
            v += 1;
        }
        if v >= s {
            break;
        }
        out.push((list[v], list[w as usize]));
    }
}

/// Same for the bipartite pairs `left x right`.
fn sample_between(
    left: &[usize],
    right: &[usize],
    p: f64,
    rng: &mut seed::Rng,
    out: &mut Vec<(usize, usize)>,
) {
    let total = left.len() as u128 * right.len() as u128;
    if p <= 0.0 || total == 0 {
        return;
    }
    let log_q = (1.0 - p).ln();
    let c = right.len() as u128;
    let mut idx: i128 = -1;
    loop {
        idx += 1 + skip(p, log_q, rng) as i128;
        if idx as u128 >= total {
            break;
        }
        let k = idx as u128;
        out.push((left[(k / c) as usize], right[(k % c) as usize]));
    }
}

fn skip(p: f64, log_q: f64, rng: &mut seed::Rng) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u: f64 = rng.random();
    let s = ((1.0 - u).ln() / log_q).floor();
    if s >= u64::MAX as f64 / 4.0 {
        u64::MAX / 4
    } else {
        s as u64
    }
}

/// Sample a graph from the model. `params.n` must be set.
pub fn sample_graph(params: &ModelParams, mode: MembershipMode, seed: u64) -> Result<PlantedGraph> {
    let n = params
        .n
        .ok_or_else(|| Error::InvalidParameter("graph sampling needs n".into()))?;
    for q in [params.a / n as f64, params.b / n as f64] {
        if q > 1.0 {
            return Err(Error::SupercriticalEdgeProbability(q));
        }
    }
    let mut rng = seed::rng_for(seed, &[0x0067_7261_7068]);
    let membership: Vec<bool> = match mode {
        MembershipMode::Bernoulli => (0..n).map(|_| rng.random_bool(params.kappa)).collect(),
        MembershipMode::FixedSize(k) => {
            if k > n {
                return Err(Error::InvalidParameter(format!("hidden set size {k} exceeds n = {n}")));
            }
            let mut m = vec![false; n];
            for v in index::sample(&mut rng, n, k) {
                m[v] = true;
            }
            m
        }
    };
    let inside: Vec<usize> = (0..n).filter(|&v| membership[v]).collect();
    let outside: Vec<usize> = (0..n).filter(|&v| !membership[v]).collect();
    let (pa, pb) = (params.a / n as f64, params.b / n as f64);
    let mut edges = Vec::new();
    sample_within(&inside, pa, &mut rng, &mut edges);
    sample_between(&inside, &outside, pb, &mut rng, &mut edges);
    sample_within(&outside, pb, &mut rng, &mut edges);
    PlantedGraph::from_edges(membership, &edges, params.kappa, params.a, params.b, seed)
}
