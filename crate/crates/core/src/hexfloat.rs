//! Hexadecimal floating-point text encoding (`%a` style), used wherever a
//! model file must round-trip `f64` values bit for bit.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};

const FRAC_BITS: u32 = 52;
const EXP_BIAS: i64 = 1023;

/// Formats a finite `f64` as e.g. `0x1.8p+1` (= 3.0).
pub fn format(v: f64) -> String {
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_field = ((bits >> FRAC_BITS) & 0x7ff) as i64;
    let frac = bits & ((1u64 << FRAC_BITS) - 1);
    if exp_field == 0x7ff {
        return if frac == 0 {
            format!("{sign}inf")
        } else {
            "nan".to_string()
        };
    }
    if exp_field == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_field == 0 {
        (0, 1 - EXP_BIAS)
    } else {
        (1, exp_field - EXP_BIAS)
    };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let esign = if exp < 0 { '-' } else { '+' };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{esign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{esign}{}", exp.abs())
    }
}

/// Parses the output of [`format`]. Only the canonical form is accepted.
pub fn parse(s: &str) -> Option<f64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let sign_bit = if neg { 1u64 << 63 } else { 0 };
    if body == "inf" {
        return Some(f64::from_bits(sign_bit | (0x7ffu64 << FRAC_BITS)));
    }
    let body = body.strip_prefix("0x")?;
    let (mantissa, exp) = body.split_once('p')?;
    let exp: i64 = exp.parse().ok()?;
    let (lead, frac_digits) = match mantissa.split_once('.') {
        Some((l, f)) => (l, f),
        None => (mantissa, ""),
    };
    if frac_digits.len() > 13 || !frac_digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return None;
    }
    let frac = if frac_digits.is_empty() {
        0
    } else {
        u64::from_str_radix(frac_digits, 16).ok()? << (4 * (13 - frac_digits.len()))
    };
    let bits = match lead {
        "0" if frac == 0 => 0,
        "0" if exp == 1 - EXP_BIAS => frac,
        "1" => {
            let field = exp + EXP_BIAS;
            if !(1..0x7ff).contains(&field) {
                return None;
            }
            ((field as u64) << FRAC_BITS) | frac
        }
        _ => return None,
    };
    Some(f64::from_bits(sign_bit | bits))
}

/// `#[serde(with = "crate::hexfloat::vec")]` for `Vec<f64>` fields.
pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        let mut seq = ser.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format(*v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        struct HexVec;
        impl<'de> Visitor<'de> for HexVec {
            type Value = Vec<f64>;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a sequence of hexadecimal floats")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Vec<f64>, A::Error> {
                let mut out = Vec::with_capacity(seq.size_hint().unwrap_or(0));
                while let Some(s) = seq.next_element::<String>()? {
                    out.push(
                        parse(&s)
                            .ok_or_else(|| de::Error::custom(format!("bad hex float {s:?}")))?,
                    );
                }
                Ok(out)
            }
        }
        de.deserialize_seq(HexVec)
    }
}

/// `#[serde(with = "crate::hexfloat::scalar")]` for `f64` fields.
pub mod scalar {
    use super::*;
    use serde::Deserialize;

    pub fn serialize<S: Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&format(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        let s = String::deserialize(de)?;
        parse(&s).ok_or_else(|| de::Error::custom(format!("bad hex float {s:?}")))
    }
}

/// Dense matrices stored row by row, each row a hex-float list.
pub mod matrix {
    use super::*;
    use nalgebra::DMatrix;
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct Rows {
        nrows: usize,
        ncols: usize,
        rows: Vec<HexRow>,
    }

    #[derive(Serialize, Deserialize)]
    struct HexRow(#[serde(with = "super::vec")] Vec<f64>);

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, ser: S) -> Result<S::Ok, S::Error> {
        let rows = (0..m.nrows())
            .map(|i| HexRow(m.row(i).iter().copied().collect()))
            .collect();
        Rows {
            nrows: m.nrows(),
            ncols: m.ncols(),
            rows,
        }
        .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Rows::deserialize(de)?;
        if r.rows.len() != r.nrows || r.rows.iter().any(|row| row.0.len() != r.ncols) {
            return Err(de::Error::custom("matrix rows do not match declared shape"));
        }
        Ok(DMatrix::from_fn(r.nrows, r.ncols, |i, j| r.rows[i].0[j]))
    }
}
