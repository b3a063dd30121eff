//! Deterministic CSV emission: header row, '.' decimal point, 13 significant
//! digits so parsed values land within 1e-12 relative of the originals.

use std::io::Write;

/// One CSV field: a number, text, or a hole (branch asymptote etc.) that
/// renders as an empty field rather than NaN text.
#[derive(Debug, Clone)]
pub enum Field {
    Num(f64),
    Text(String),
    Hole,
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.into())
    }
}

impl From<Option<f64>> for Field {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Field::Hole, Field::Num)
    }
}

pub fn format_number(x: f64) -> String {
    format!("{:.12e}", x)
}

fn render(field: &Field) -> String {
    match field {
        Field::Num(v) => format_number(*v),
        Field::Text(t) => {
            if t.contains(',') || t.contains('"') || t.contains('\n') {
                format!("\"{}\"", t.replace('"', "\"\""))
            } else {
                t.clone()
            }
        }
        Field::Hole => String::new(),
    }
}

/// Write header + rows. Row order is the caller's; nothing is reordered.
pub fn emit_csv<W: Write>(mut w: W, header: &[&str], rows: &[Vec<Field>]) -> std::io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(render).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
