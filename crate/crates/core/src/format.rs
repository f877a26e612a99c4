//! Plain-text gate lists.
//!
//! ```text
//! n 4 m 3
//! # optional label
//! R 0 1 7.8539816339744828e-1
//! C 1 -1.0000000000000000e0
//! R 2 3 7.8539816339744828e-1
//! ```
//!
//! Line 1 is the header. Lines starting with `#` are comments; the first one
//! carries the label. Reals are written with 17 significant digits, which is
//! enough for an exact binary64 round trip.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gate::{Gate, LinearAlgorithm};

pub fn render(algorithm: &LinearAlgorithm) -> String {
    let mut out = String::with_capacity(32 * (algorithm.m() + 2));
    let _ = writeln!(out, "n {} m {}", algorithm.n(), algorithm.m());
    if !algorithm.label.is_empty() {
        let _ = writeln!(out, "# {}", algorithm.label.replace('\n', " "));
    }
    for gate in algorithm.gates() {
        let _ = match *gate {
            Gate::Rotation { i, j, theta } => writeln!(out, "R {i} {j} {theta:.16e}"),
            Gate::Constant { i, c } => writeln!(out, "C {i} {c:.16e}"),
        };
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from {tok:?}")))
}

pub fn parse(text: &str) -> Result<LinearAlgorithm> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    let (n, m) = loop {
        let Some((no, line)) = lines.next() else {
            return Err(parse_err(1, "empty input"));
        };
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        if toks.next() != Some("n") {
            return Err(parse_err(no, "expected header `n <n> m <m>`"));
        }
        let n: usize = field(toks.next(), no, "n")?;
        if toks.next() != Some("m") {
            return Err(parse_err(no, "expected header `n <n> m <m>`"));
        }
        let m: usize = field(toks.next(), no, "m")?;
        break (n, m);
    };

    let mut label = None;
    let mut gates = Vec::with_capacity(m);
    for (no, line) in lines {
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            label.get_or_insert_with(|| comment.trim().to_string());
            continue;
        }
        let mut toks = line.split_whitespace();
        let gate = match toks.next() {
            Some("R") => {
                let i = field(toks.next(), no, "i")?;
                let j = field(toks.next(), no, "j")?;
                let theta = field(toks.next(), no, "theta")?;
                Gate::rotation(i, j, theta)
            }
            Some("C") => {
                let i = field(toks.next(), no, "i")?;
                let c = field(toks.next(), no, "c")?;
                Gate::constant(i, c)
            }
            Some(other) => return Err(parse_err(no, format!("unknown gate kind {other:?}"))),
            None => unreachable!("blank lines are skipped"),
        }
        .map_err(|e| parse_err(no, e.to_string()))?;
        if toks.next().is_some() {
            return Err(parse_err(no, "trailing tokens"));
        }
        gate.check_dimension(n)
            .map_err(|e| parse_err(no, e.to_string()))?;
        gates.push(gate);
    }
    if gates.len() != m {
        return Err(parse_err(
            1,
            format!("header declares {m} gates but {} were read", gates.len()),
        ));
    }
    LinearAlgorithm::new(n, gates, label.unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_seventeen_digits() {
        let alg = LinearAlgorithm::new(
            2,
            vec![
                Gate::rotation(0, 1, std::f64::consts::FRAC_PI_4).unwrap(),
                Gate::constant(1, -1.0).unwrap(),
            ],
            "wht 2",
        )
        .unwrap();
        let text = render(&alg);
        assert_eq!(
            text,
            "n 2 m 2\n# wht 2\nR 0 1 7.8539816339744828e-1\nC 1 -1.0000000000000000e0\n"
        );
        assert_eq!(parse(&text).unwrap(), alg);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse("n 3 m 2\nR 0 1 0.5\nX 1 2\n").unwrap_err();
        assert_eq!(err, parse_err(3, "unknown gate kind \"X\""));
        let err = parse("n 3 m 1\n\nR 0 3 0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = parse("n 3 m 1\nC 0 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse("n 3 m 2\nC 0 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse("").is_err());
        assert!(parse("m 3 n 2\n").is_err());
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        prop_oneof![
            (0..n, 1..n, -1e3f64..1e3).prop_map(move |(i, d, th)| Gate::Rotation {
                i,
                j: (i + d) % n,
                theta: th
            }),
            (0..n, prop::num::f64::NORMAL).prop_map(|(i, c)| Gate::Constant { i, c }),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(gates in prop::collection::vec(arb_gate(6), 0..40)) {
            let alg = LinearAlgorithm::new(6, gates, "prop").unwrap();
            prop_assert_eq!(parse(&render(&alg)).unwrap(), alg);
        }
    }
}
