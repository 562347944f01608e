//! Plain CSV emission with fixed float formatting (17 significant digits),
//! so identical runs produce byte-identical files.

use std::io::{self, Write};

pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// A CSV cell.
#[derive(Clone, Copy, Debug)]
pub enum Cell<'a> {
    F(f64),
    U(u64),
    I(i64),
    S(&'a str),
    B(bool),
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::U(u) => u.to_string(),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => (*s).to_string(),
            Cell::B(b) => u8::from(*b).to_string(),
        }
    }
}

pub struct CsvWriter<W: Write> {
    out: W,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    /// `# key = value` metadata line.
    pub fn comment(&mut self, text: &str) -> io::Result<()> {
        writeln!(self.out, "# {text}")
    }

    pub fn header(&mut self, columns: &[&str]) -> io::Result<()> {
        writeln!(self.out, "{}", columns.join(","))
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) -> io::Result<()> {
        let rendered: Vec<String> = cells.iter().map(Cell::render).collect();
        writeln!(self.out, "{}", rendered.join(","))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
