//! Plain-text data outputs: trajectory and sweep CSVs.

use crate::dae::{ContinuationResult, Trajectory};

/// Formats with 15 significant digits, `%g` style, trailing zeros trimmed.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.14e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        trim_zeros(&fixed)
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// `t,x_1..x_n,u_1..u_m`, one row per stored step.
pub fn trajectory_csv(tr: &Trajectory) -> String {
    let n = tr.states.first().map_or(0, |x| x.len());
    let m = tr.algebraics.first().map_or(0, |u| u.len());
    let mut out = String::from("t");
    for i in 1..=n {
        out.push_str(&format!(",x_{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",u_{i}"));
    }
    out.push('\n');
    for k in 0..tr.len() {
        out.push_str(&fmt_num(tr.times[k]));
        for v in tr.states[k].iter().chain(tr.algebraics[k].iter()) {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        out.push('\n');
    }
    out
}

/// `s,x_star_1..,in_D1..,max_Re_lambda`.
pub fn sweep_csv(res: &ContinuationResult) -> String {
    let Some(first) = res.points.first() else {
        return "s,max_Re_lambda\n".into();
    };
    let n = first.equilibrium.x.len();
    let buses = first.in_region.len();
    let mut out = String::from("s");
    for i in 1..=n {
        out.push_str(&format!(",x_star_{i}"));
    }
    for i in 1..=buses {
        out.push_str(&format!(",in_D{i}"));
    }
    out.push_str(",max_Re_lambda\n");
    for p in &res.points {
        out.push_str(&fmt_num(p.s));
        for v in p.equilibrium.x.iter() {
            out.push(',');
            out.push_str(&fmt_num(*v));
        }
        for b in &p.in_region {
            out.push_str(if *b { ",1" } else { ",0" });
        }
        out.push(',');
        out.push_str(&fmt_num(p.equilibrium.max_real));
        out.push('\n');
    }
    out
}
