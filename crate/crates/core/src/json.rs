//! Serde helpers shared by the JSON schemas.

/// Complex numbers as `{"re": x, "im": y}`; `im` may be omitted.
pub mod complex_obj {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Repr {
        re: f64,
        #[serde(default)]
        im: f64,
    }

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        Repr { re: z.re, im: z.im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let r = Repr::deserialize(d)?;
        Ok(Complex64::new(r.re, r.im))
    }
}

/// Lists of complex numbers in the `{"re", "im"}` form.
pub mod complex_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Item(#[serde(with = "super::complex_obj")] Complex64);

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|z| Item(*z)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<Item>::deserialize(d)?
            .into_iter()
            .map(|i| i.0)
            .collect())
    }
}

pub mod complex_vec_opt {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "super::complex_vec")] Vec<Complex64>);

    pub fn serialize<S: Serializer>(v: &Option<Vec<Complex64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|w| Wrapped(w.clone())).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<Vec<Complex64>>, D::Error> {
        Ok(Option::<Wrapped>::deserialize(d)?.map(|w| w.0))
    }
}
