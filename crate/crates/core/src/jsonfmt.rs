//! JSON serialization with 17-significant-digit decimal floats.
//!
//! File-format contracts in this crate pin floats to 17 significant digits so
//! every f64 round-trips exactly regardless of the reader's shortest-decimal
//! behavior.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::error::Result;

struct SigDigits<F>(F);

impl<F: Formatter> Formatter for SigDigits<F> {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        // 1 leading + 16 fractional digits = 17 significant digits.
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        self.write_f64(writer, f64::from(value))
    }
}

impl SigDigits<CompactFormatter> {
    fn new() -> Self {
        SigDigits(CompactFormatter)
    }
}

/// Serializes to compact JSON with 17-significant-digit floats.
pub fn to_string_17sig<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits::new());
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Serializes to pretty-printed JSON with 17-significant-digit floats.
pub fn to_string_17sig_pretty<T: Serialize>(value: &T) -> Result<String> {
    struct Pretty<'a>(PrettyFormatter<'a>);
    impl Formatter for Pretty<'_> {
        fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            write!(writer, "{value:.16e}")
        }
        fn begin_array<W>(&mut self, w: &mut W) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.begin_array(w)
        }
        fn end_array<W>(&mut self, w: &mut W) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.end_array(w)
        }
        fn begin_array_value<W>(&mut self, w: &mut W, first: bool) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.begin_array_value(w, first)
        }
        fn end_array_value<W>(&mut self, w: &mut W) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.end_array_value(w)
        }
        fn begin_object<W>(&mut self, w: &mut W) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.begin_object(w)
        }
        fn end_object<W>(&mut self, w: &mut W) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.end_object(w)
        }
        fn begin_object_key<W>(&mut self, w: &mut W, first: bool) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.begin_object_key(w, first)
        }
        fn begin_object_value<W>(&mut self, w: &mut W) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.begin_object_value(w)
        }
        fn end_object_value<W>(&mut self, w: &mut W) -> io::Result<()>
        where
            W: ?Sized + io::Write,
        {
            self.0.end_object_value(w)
        }
    }

    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Pretty(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        let vals = vec![0.0, 1.0, std::f64::consts::PI, 1.0 / 3.0, -2.5e-300];
        let text = to_string_17sig(&vals).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(vals, back);
    }

    #[test]
    fn pretty_output_is_valid_json() {
        let text = to_string_17sig_pretty(&serde_json::json!({"x": [1.5, 2.25]})).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["x"][1].as_f64().unwrap(), 2.25);
    }
}
