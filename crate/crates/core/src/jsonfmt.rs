//! JSON output with controlled float formatting.
//!
//! Checkpoints need every `f64` written with 17 significant digits so that a
//! save/load/save cycle is byte-identical; reports want fixed decimals.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FloatStyle {
    /// Scientific notation, 17 significant digits (`1.2500000000000000e-1`).
    RoundTrip,
    /// Fixed number of digits after the decimal point.
    Decimals(usize),
}

impl FloatStyle {
    pub fn format(self, value: f64) -> String {
        match self {
            FloatStyle::RoundTrip => format!("{value:.16e}"),
            FloatStyle::Decimals(n) => format!("{value:.n$}"),
        }
    }
}

struct NumberFormatter<'a> {
    pretty: Option<PrettyFormatter<'a>>,
    style: FloatStyle,
}

macro_rules! forward {
    ($($name:ident),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
                match &mut self.pretty {
                    Some(p) => p.$name(writer),
                    None => CompactFormatter.$name(writer),
                }
            }
        )*
    };
}

macro_rules! forward_first {
    ($($name:ident),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
                match &mut self.pretty {
                    Some(p) => p.$name(writer, first),
                    None => CompactFormatter.$name(writer, first),
                }
            }
        )*
    };
}

impl Formatter for NumberFormatter<'_> {
    forward!(begin_array, end_array, end_array_value, begin_object, end_object);
    forward!(begin_object_value, end_object_value);
    forward_first!(begin_array_value, begin_object_key);

    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(self.style.format(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

pub fn to_string<T: Serialize + ?Sized>(
    value: &T,
    style: FloatStyle,
    pretty: bool,
) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let formatter = NumberFormatter {
        pretty: pretty.then(PrettyFormatter::new),
        style,
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}
