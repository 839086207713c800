// SPDX-License-Identifier: MIT OR Apache-2.0

//! Text input: one value per line, `position value`, or `group position value`.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

/// Values of one group in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub positions: Vec<Option<String>>,
    pub values: Vec<f64>,
}

/// Parse whitespace-, tab- or comma-separated text. Blank lines and `#` comments
/// are skipped. Groups keep the order of first appearance.
pub fn parse(text: &str) -> Result<Vec<Group>, ParseError> {
    let mut groups: Vec<Group> = Vec::new();
    let mut columns = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() > 3 {
            return Err(ParseError {
                line,
                message: format!("expected 1 to 3 columns, found {}", fields.len()),
            });
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(n) if n != fields.len() => {
                return Err(ParseError {
                    line,
                    message: format!("expected {n} columns as on earlier lines, found {}", fields.len()),
                })
            }
            Some(_) => {}
        }
        let token = fields[fields.len() - 1];
        let value: f64 = token.parse().map_err(|_| ParseError {
            line,
            message: format!("cannot read {token:?} as a number"),
        })?;
        if !value.is_finite() {
            return Err(ParseError {
                line,
                message: format!("value {token:?} is not finite"),
            });
        }
        let (name, position) = match fields.len() {
            3 => (fields[0].to_string(), Some(fields[1].to_string())),
            2 => (String::new(), Some(fields[0].to_string())),
            _ => (String::new(), None),
        };
        let group = match groups.iter().position(|g| g.name == name) {
            Some(i) => &mut groups[i],
            None => {
                groups.push(Group {
                    name,
                    positions: Vec::new(),
                    values: Vec::new(),
                });
                groups.last_mut().expect("just pushed")
            }
        };
        group.positions.push(position);
        group.values.push(value);
    }
    if groups.is_empty() {
        return Err(ParseError {
            line: 0,
            message: "no data values found".into(),
        });
    }
    Ok(groups)
}

/// 64-bit FNV-1a digest of the raw input, printed as hex.
pub fn digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_column_with_comments() {
        let g = parse("# header\n1.5\n\n2 # trailing\n-3e-1\n").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].values, vec![1.5, 2.0, -0.3]);
    }

    #[test]
    fn grouped_columns() {
        let g = parse("chr1 10 0.1\nchr1 20 0.2\nchr2 5 1.0\n").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].name, "chr2");
        assert_eq!(g[0].positions[1].as_deref(), Some("20"));
    }

    #[test]
    fn bad_token_names_line() {
        let e = parse("1\n2\nabc\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = parse("1 2\n3\n").unwrap_err();
        assert_eq!(e.line, 2);
    }
}
