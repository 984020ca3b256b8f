//! CSV text formats for paths and trajectories.
//!
//! Numbers are written in positional decimal with 17 significant digits,
//! which parses back to the identical `f64`. Lines starting with `#` are
//! comments.

use crate::action::Path;
use crate::error::{Error, Result};
use crate::simulate::Trajectory;

/// Positional decimal with 17 significant digits; `inf`, `-inf`, `nan`.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (16 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: '{}'", field.trim()),
    })
}

/// Data lines with their 1-based line numbers, skipping comments and blanks.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn check_header(header: Option<(usize, &str)>, first: &str) -> Result<(usize, usize)> {
    let (line, h) = header.ok_or(Error::Parse {
        line: 0,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = h.split(',').map(str::trim).collect();
    let ok = cols.len() >= 2 && cols[0] == first && cols[1..].iter().enumerate().all(|(i, c)| *c == format!("x{}", i + 1));
    if !ok {
        return Err(Error::Parse {
            line,
            message: format!("expected header '{first},x1,...,xd', got '{h}'"),
        });
    }
    Ok((line, cols.len() - 1))
}

pub fn path_to_csv(path: &Path) -> String {
    let mut out = String::from("t");
    for a in 1..=path.dim() {
        out.push_str(&format!(",x{a}"));
    }
    out.push('\n');
    for (i, t) in path.times().iter().enumerate() {
        out.push_str(&fmt17(*t));
        for c in path.knot(i) {
            out.push(',');
            out.push_str(&fmt17(*c));
        }
        out.push('\n');
    }
    out
}

/// Parses a path file; times must start at 0 and increase strictly.
pub fn path_from_csv(text: &str) -> Result<Path> {
    let mut lines = data_lines(text);
    let (_, d) = check_header(lines.next(), "t")?;
    let mut times = Vec::new();
    let mut knots = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, got {}", d + 1, fields.len()),
            });
        }
        let t = parse_f64(fields[0], line)?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(Error::Parse {
                    line,
                    message: format!("times must increase strictly ({t} after {prev})"),
                });
            }
        } else if t != 0.0 {
            return Err(Error::Parse {
                line,
                message: "the first time must be 0".into(),
            });
        }
        times.push(t);
        knots.push(fields[1..].iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<f64>>>()?);
    }
    Path::new(times, knots)
}

/// `k,x1,…,xd` with positions in macroscopic units.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut out = String::from("k");
    for a in 1..=traj.dim() {
        out.push_str(&format!(",x{a}"));
    }
    out.push('\n');
    for k in 0..=traj.n_steps() {
        out.push_str(&k.to_string());
        for c in traj.position(k) {
            out.push(',');
            out.push_str(&fmt17(c));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fmt17_examples() {
        assert_eq!(fmt17(0.5), "0.5");
        assert_eq!(fmt17(1.0), "1");
        assert_eq!(fmt17(-2.25), "-2.25");
        assert_eq!(fmt17(0.1), "0.10000000000000001");
        assert_eq!(fmt17(f64::INFINITY), "inf");
        assert_eq!(fmt17(f64::NAN), "nan");
        assert_eq!(fmt17(1e20), "100000000000000000000");
        assert!(!fmt17(1.5e-7).contains('e'));
    }

    proptest! {
        #[test]
        fn fmt17_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let back: f64 = fmt17(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn path_round_trip_is_exact() {
        let p = Path::new(vec![0.0, 0.1, 1.0 / 3.0], vec![vec![0.1, -0.2], vec![1e-9, 3.0], vec![2.0 / 7.0, 0.0]]).unwrap();
        let text = path_to_csv(&p);
        assert!(text.starts_with("t,x1,x2\n"));
        assert_eq!(path_from_csv(&text).unwrap(), p);
    }

    #[test]
    fn malformed_paths_are_rejected() {
        assert!(matches!(path_from_csv("t,x1\n0,0\n0.5,1\n0.4,2\n"), Err(Error::Parse { line: 4, .. })));
        assert!(path_from_csv("t,y\n0,0\n1,1\n").is_err());
        assert!(path_from_csv("t,x1\n0,0\n1,abc\n").is_err());
        assert!(path_from_csv("t,x1\n0.5,0\n1,1\n").is_err());
        assert!(path_from_csv("t,x1\n0,0,1\n").is_err());
        assert!(path_from_csv("").is_err());
        let ok = path_from_csv("# comment\nt,x1\n0,0\n\n1,0.5\n").unwrap();
        assert_eq!(ok.n_segments(), 1);
    }
}
