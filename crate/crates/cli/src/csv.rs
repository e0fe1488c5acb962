//! CSV emission: `#` comment lines, one header, fixed-precision rows.

/// Decimal rendering with 9 significant digits, trailing zeros trimmed.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let exponent = rounded.abs().log10().floor() as i32;
    let decimals = (8 - exponent).max(0) as usize;
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.header.len(), "row width differs from header");
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            if c.is_empty() {
                out.push_str("#\n");
            } else {
                out.push_str("# ");
                out.push_str(c);
                out.push('\n');
            }
        }
        let mut w = ::csv::WriterBuilder::new().terminator(::csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        for r in std::iter::once(&self.header).chain(&self.rows) {
            w.write_record(r).expect("writing to memory");
        }
        let bytes = w.into_inner().expect("flushing to memory");
        out.push_str(std::str::from_utf8(&bytes).expect("cells are utf-8"));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(1.0), "1");
        assert_eq!(num(0.398816112623344), "0.398816113");
        assert_eq!(num(0.00029819712484594), "0.000298197125");
        assert_eq!(num(46.187034), "46.187034");
        assert_eq!(num(-2.5), "-2.5");
        assert_eq!(num(123456789012.0), "123456789000");
        assert_eq!(num(9.9999999999), "10");
        assert_eq!(num(-1e-30), "-0.000000000000000000000000000001");
        assert_eq!(num(0.0), "0");
        assert_eq!(num(f64::NAN), "nan");
    }

    #[test]
    fn render_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.comment("seed = 1");
        t.row(vec!["1".into(), num(0.5)]);
        assert_eq!(t.render(), "# seed = 1\na,b\n1,0.5\n");
        t.row(vec!["x,y".into(), String::new()]);
        assert!(t.render().ends_with("\"x,y\",\n"));
    }
}
