//! Serde helpers for values plain JSON cannot carry.

/// `f64` that may be infinite or NaN: finite values stay numbers, the rest
/// become the strings `"inf"`, `"-inf"` and `"nan"`.
pub mod ext_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number or inf/-inf/nan, got {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Serialize, Deserialize)]
    struct W(#[serde(with = "super::ext_f64")] f64);

    #[test]
    fn roundtrip() {
        for v in [0.5, -3.0, f64::INFINITY, f64::NEG_INFINITY] {
            let s = serde_json::to_string(&W(v)).unwrap();
            assert_eq!(serde_json::from_str::<W>(&s).unwrap().0, v);
        }
        assert_eq!(serde_json::to_string(&W(f64::NEG_INFINITY)).unwrap(), "\"-inf\"");
        assert!(serde_json::from_str::<W>("\"nan\"").unwrap().0.is_nan());
        assert!(serde_json::from_str::<W>("\"big\"").is_err());
    }
}
