//! Plain-text output helpers shared by every writer.

use std::fmt::Write as _;

/// Version tag written as the first comment line of every CSV file.
pub const CSV_SCHEMA: &str = "# tlsmech-csv v1";

/// Formats a number with 9 significant digits, `%g` style.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
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

/// Builds a CSV document with the schema comment and a header row.
pub fn csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_SCHEMA}");
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.as_ref().join(","));
    }
    out
}

/// Two-column CSV `(n, P_n)`.
pub fn pn_csv(pn: &[f64]) -> String {
    csv(&["n", "P_n"], pn.iter().enumerate().map(|(n, p)| vec![n.to_string(), fmt_num(*p)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.581_976_706_869_326_4), "0.581976707");
        assert_eq!(fmt_num(-1234.5678912345), "-1234.56789");
        assert_eq!(fmt_num(1.5e-7), "1.5e-7");
        assert_eq!(fmt_num(18413.4567891), "18413.4568");
        assert_eq!(fmt_num(2.0e12), "2e12");
    }

    #[test]
    fn csv_layout() {
        let doc = pn_csv(&[0.5, 0.25]);
        let lines: Vec<_> = doc.lines().collect();
        assert_eq!(lines, vec![CSV_SCHEMA, "n,P_n", "0,0.5", "1,0.25"]);
    }
}
