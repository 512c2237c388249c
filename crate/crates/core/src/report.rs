//! Report serialization. Every float is rounded to 12 significant digits.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::experiments::RabiCurve;

/// Rounds to 12 significant digits; non-finite values pass through.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(sig12).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// `backend,M,t_ns,mean,variance` rows.
pub fn curves_csv(curves: &[RabiCurve]) -> String {
    let mut out = String::from("backend,M,t_ns,mean,variance\n");
    for c in curves {
        for ((t, m), v) in c.times.iter().zip(&c.means).zip(&c.variances) {
            writeln!(out, "{},{},{},{},{}", c.backend, c.m, sig12(*t), sig12(*m), sig12(*v))
                .expect("string write");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discriminators::Backend;

    #[test]
    fn rounding() {
        assert_eq!(sig12(0.1 + 0.2), 0.3);
        assert_eq!(sig12(1.0 / 3.0), 0.333333333333);
        assert_eq!(sig12(-123456.7890123456), -123456.789012);
        assert_eq!(sig12(0.0), 0.0);
        assert!(sig12(f64::NAN).is_nan());
    }

    #[test]
    fn json_floats_are_rounded() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            b: Vec<f64>,
            n: u64,
        }
        let s = to_json(&R {
            a: 2.0 / 3.0,
            b: vec![1e-20 / 3.0],
            n: u64::MAX,
        })
        .unwrap();
        assert!(s.contains("0.666666666667"));
        assert!(s.contains("3.33333333333e-21"));
        assert!(s.contains(&u64::MAX.to_string()));
    }

    #[test]
    fn csv_layout() {
        let c = RabiCurve {
            backend: Backend::Trmnn,
            m: 10,
            times: vec![0.0, 5.0],
            means: vec![0.1, 2.0 / 3.0],
            variances: vec![0.0, 0.25],
        };
        assert_eq!(
            curves_csv(&[c]),
            "backend,M,t_ns,mean,variance\ntrmnn,10,0,0.1,0\ntrmnn,10,5,0.666666666667,0.25\n"
        );
    }
}
