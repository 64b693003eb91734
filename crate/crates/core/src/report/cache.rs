//! Line-oriented text cache of stage solutions.
//!
//! ```text
//! mrdp-stages 1
//! key <hex>
//! stages <T>
//! stage <t> <shared 0|1> <first node|-> <frontiers>
//! frontier <node|-> <vertices> <assets> <children>
//! ref <prices…>
//! v <neg_mean> <risk> <position…> <successor pairs…>
//! ```
//!
//! Floats are written in shortest round-trip form, so a reload is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bellman::{BackwardSolution, FrontierColumn, NodeFrontier, StageSolution, UpperImage};
use crate::error::{Error, Result};
use crate::risk::MeanRiskProfile;

const MAGIC: &str = "mrdp-stages 1";

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.stages"))
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

pub fn encode_stages(key: &str, sol: &BackwardSolution) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}\nkey {key}\nstages {}", sol.stages.len());
    for st in &sol.stages {
        let _ = writeln!(
            s,
            "stage {} {} {} {}",
            st.t,
            st.shared as u8,
            opt(st.first_node),
            st.frontiers.len()
        );
        for f in &st.frontiers {
            let children = f.columns.first().map(|c| c.successors.len()).unwrap_or(0);
            let _ = writeln!(
                s,
                "frontier {} {} {} {children}",
                opt(f.node),
                f.image.len(),
                f.ref_prices.len()
            );
            s.push_str("ref");
            for p in &f.ref_prices {
                let _ = write!(s, " {p}");
            }
            s.push('\n');
            for (v, c) in f.image.vertices().iter().zip(&f.columns) {
                let _ = write!(s, "v {} {}", v[0], v[1]);
                for x in c.to_vec() {
                    let _ = write!(s, " {x}");
                }
                s.push('\n');
            }
        }
    }
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self
            .it
            .next()
            .ok_or_else(|| Error::Config("stage cache truncated".into()))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() != Some(&tag) {
            return Err(Error::Config(format!(
                "stage cache line {}: expected '{tag}'",
                n + 1
            )));
        }
        Ok((n + 1, fields[1..].to_vec()))
    }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Config(format!("stage cache line {line}: bad number '{s}'")))
}

fn opt_num(line: usize, s: &str) -> Result<Option<usize>> {
    if s == "-" {
        Ok(None)
    } else {
        num(line, s).map(Some)
    }
}

pub fn decode_stages(text: &str, key: &str) -> Result<BackwardSolution> {
    let mut it = text.lines().enumerate();
    match it.next() {
        Some((_, m)) if m == MAGIC => {}
        _ => return Err(Error::Config("not a stage cache file".into())),
    }
    let mut lines = Lines { it };
    let (_, k) = lines.next("key")?;
    if k.first() != Some(&key) {
        return Err(Error::Config(
            "stage cache key does not match the configuration".into(),
        ));
    }
    let (n, f) = lines.next("stages")?;
    let count: usize = num(n, f.first().copied().unwrap_or(""))?;
    let mut stages = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, f) = lines.next("stage")?;
        if f.len() != 4 {
            return Err(Error::Config(format!(
                "stage cache line {n}: malformed stage"
            )));
        }
        let t = num(n, f[0])?;
        let shared = f[1] == "1";
        let first_node = opt_num(n, f[2])?;
        let nf: usize = num(n, f[3])?;
        let mut frontiers = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (n, f) = lines.next("frontier")?;
            if f.len() != 4 {
                return Err(Error::Config(format!(
                    "stage cache line {n}: malformed frontier"
                )));
            }
            let node = opt_num(n, f[0])?;
            let (nv, d, k): (usize, usize, usize) = (num(n, f[1])?, num(n, f[2])?, num(n, f[3])?);
            let (n, f) = lines.next("ref")?;
            let ref_prices = f.iter().map(|x| num(n, x)).collect::<Result<Vec<f64>>>()?;
            let mut vertices = Vec::with_capacity(nv);
            let mut columns = Vec::with_capacity(nv);
            for _ in 0..nv {
                let (n, f) = lines.next("v")?;
                let x = f.iter().map(|x| num(n, x)).collect::<Result<Vec<f64>>>()?;
                if x.len() != 2 + d + 2 * k {
                    return Err(Error::Config(format!("stage cache line {n}: wrong width")));
                }
                vertices.push([x[0], x[1]]);
                columns.push(FrontierColumn {
                    position: x[2..2 + d].to_vec(),
                    successors: x[2 + d..]
                        .chunks(2)
                        .map(|p| MeanRiskProfile::new(p[0], p[1]))
                        .collect(),
                });
            }
            frontiers.push(NodeFrontier {
                node,
                ref_prices,
                image: UpperImage::new(vertices)?,
                columns,
            });
        }
        stages.push(StageSolution {
            t,
            shared,
            first_node,
            frontiers,
        });
    }
    Ok(BackwardSolution { stages })
}

/// Loads the cached solution for `key`, if present and readable.
pub fn load_stages(dir: &Path, key: &str) -> Result<Option<BackwardSolution>> {
    let path = cache_path(dir, key);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    decode_stages(&text, key).map(Some)
}

pub fn store_stages(dir: &Path, key: &str, sol: &BackwardSolution) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, key);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_stages(key, sol))?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}
