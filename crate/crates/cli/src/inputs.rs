//! Parsing of algorithm sources, numeric literals and projection specs.

use std::fs;
use std::io::Read;

use anyhow::{anyhow, bail, Context, Result};
use fourier_bottleneck::builders::FixtureSpec;
use fourier_bottleneck::format;
use fourier_bottleneck::linalg::coordinate_projection;
use fourier_bottleneck::LinearAlgorithm;
use nalgebra::DMatrix;

/// A float, optionally written as `base^exp` (e.g. `2^-10`).
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let value = match s.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| format!("bad base in {s:?}"))?;
            let exp: f64 = exp.trim().parse().map_err(|_| format!("bad exponent in {s:?}"))?;
            base.powf(exp)
        }
        None => s.parse().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

/// A file path, `-` for stdin, or a builder spec such as `wht:8`,
/// `dft:8`, `random:8:40:7`, `scaled:8:4:4` or `inverse:8:4:4`.
pub fn load_algorithm(source: &str) -> Result<LinearAlgorithm> {
    if source == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
        return format::parse(&text).map_err(|e| anyhow!("<stdin>: {e}"));
    }
    if !std::path::Path::new(source).exists() {
        if let Some(spec) = builder_spec(source)? {
            return Ok(spec.build()?);
        }
    }
    let text = fs::read_to_string(source).with_context(|| format!("reading {source}"))?;
    format::parse(&text).map_err(|e| anyhow!("{source}: {e}"))
}

fn builder_spec(source: &str) -> Result<Option<FixtureSpec>> {
    let mut parts = source.split(':');
    let kind = parts.next().unwrap_or_default();
    let args: Vec<&str> = parts.collect();
    let int = |k: usize| -> Result<usize> {
        args.get(k)
            .ok_or_else(|| anyhow!("{source}: missing argument {}", k + 1))?
            .parse()
            .with_context(|| format!("{source}: argument {}", k + 1))
    };
    let num = |k: usize| -> Result<f64> {
        let s = args.get(k).ok_or_else(|| anyhow!("{source}: missing argument {}", k + 1))?;
        parse_number(s).map_err(|e| anyhow!("{source}: {e}"))
    };
    let spec = match (kind, args.len()) {
        ("wht", 1) => FixtureSpec::Wht { n: int(0)? },
        ("dft", 1) => FixtureSpec::DftReal { n: int(0)? },
        ("random", 3) | ("random-angles", 3) => FixtureSpec::Random {
            n: int(0)?,
            m: int(1)?,
            seed: int(2)? as u64,
            angle_only: kind == "random-angles",
        },
        ("scaled", 3) => FixtureSpec::ScaledBottleneck { n: int(0)?, c: num(1)?, k: int(2)? },
        ("inverse", 3) => FixtureSpec::InverseBottleneck { n: int(0)?, c: num(1)?, k: int(2)? },
        (_, 0) => return Ok(None),
        _ => bail!("unrecognized builder spec {source:?}"),
    };
    Ok(Some(spec))
}

/// `identity`, `coords:0,2,5` (diagonal projection onto those coordinates)
/// or a path to a whitespace-separated `n × n` matrix (`#` comments allowed).
pub fn load_matrix(spec: &str, n: usize) -> Result<DMatrix<f64>> {
    if spec == "identity" || spec == "id" {
        return Ok(DMatrix::identity(n, n));
    }
    if let Some(list) = spec.strip_prefix("coords:") {
        let coords = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>().with_context(|| format!("coordinate {s:?}")))
            .collect::<Result<Vec<_>>>()?;
        if let Some(&bad) = coords.iter().find(|&&c| c >= n) {
            bail!("coordinate {bad} out of range for n = {n}");
        }
        return Ok(coordinate_projection(n, &coords));
    }
    let text = fs::read_to_string(spec).with_context(|| format!("reading matrix {spec}"))?;
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| parse_number(s).map_err(|e| anyhow!("{spec}: line {}: {e}", no + 1)))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != n {
            bail!("{spec}: line {}: expected {n} entries, got {}", no + 1, row.len());
        }
        rows.push(row);
    }
    if rows.len() != n {
        bail!("{spec}: expected {n} rows, got {}", rows.len());
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(parse_number("2^-10"), Ok(2f64.powi(-10)));
        assert_eq!(parse_number(" 1e-3 "), Ok(1e-3));
        assert!(parse_number("2^x").is_err());
        assert!(parse_number("inf").is_err());
    }

    #[test]
    fn builder_specs() {
        assert_eq!(load_algorithm("wht:8").unwrap().m(), 24);
        assert_eq!(load_algorithm("scaled:8:2^2:4").unwrap().m(), 32);
        assert!(load_algorithm("wht:8:1").is_err());
    }

    #[test]
    fn matrix_specs() {
        assert_eq!(load_matrix("identity", 3).unwrap(), DMatrix::identity(3, 3));
        assert_eq!(load_matrix("coords:0,2", 3).unwrap().trace(), 2.0);
        assert!(load_matrix("coords:5", 3).is_err());
    }
}
