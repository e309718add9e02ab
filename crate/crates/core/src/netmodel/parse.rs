//! Reader for the MATPOWER `.m` case layout.
//!
//! Supported subset: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch` and
//! `mpc.gencost` with polynomial costs of degree at most two. Any other
//! `mpc.*` assignment is skipped, as are columns beyond the ones read here.

use super::{invalid, Branch, Bus, BusKind, CaseError, Generator, NetworkCase, Violation};

/// A numeric matrix together with the source line of every row.
struct Table {
    rows: Vec<Vec<f64>>,
    lines: Vec<usize>,
}

#[derive(Default)]
struct RawCase {
    name: String,
    base_mva: Option<f64>,
    bus: Option<Table>,
    gen: Option<Table>,
    branch: Option<Table>,
    gencost: Option<Table>,
}

fn syntax(line: usize, message: impl Into<String>) -> CaseError {
    CaseError::Syntax { line, message: message.into() }
}

/// Character cursor over comment-stripped text that tracks line numbers.
struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { chars: text.chars().peekable(), line: 1 }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next();
        if c == Some('\n') {
            self.line += 1;
        }
        c
    }

    fn skip_comment(&mut self) {
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            self.bump();
        }
    }

    /// Skips whitespace (including newlines) and comments.
    fn skip_blank(&mut self) {
        while let Some(c) = self.peek() {
            if c == '%' || c == '#' {
                self.skip_comment();
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn ident(&mut self) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '.' {
                out.push(c);
                self.bump();
            } else {
                break;
            }
        }
        out
    }

    /// Consumes up to and including the next `;` or newline.
    fn skip_statement(&mut self) {
        while let Some(c) = self.bump() {
            if c == ';' || c == '\n' {
                break;
            }
        }
    }

    /// Skips a bracketed block, honoring nesting.
    fn skip_block(&mut self, open: char, close: char) -> Result<(), CaseError> {
        let start = self.line;
        let mut depth = 0usize;
        while let Some(c) = self.bump() {
            if c == '%' {
                self.skip_comment();
            } else if c == '\'' {
                while let Some(q) = self.bump() {
                    if q == '\'' || q == '\n' {
                        break;
                    }
                }
            } else if c == open {
                depth += 1;
            } else if c == close {
                depth -= 1;
                if depth == 0 {
                    return Ok(());
                }
            }
        }
        Err(syntax(start, format!("unterminated `{open}` block")))
    }

    fn matrix(&mut self) -> Result<Table, CaseError> {
        let start = self.line;
        match self.bump() {
            Some('[') => {}
            _ => return Err(syntax(start, "expected `[`")),
        }
        let mut table = Table { rows: Vec::new(), lines: Vec::new() };
        let mut row: Vec<f64> = Vec::new();
        let mut row_line = self.line;
        let mut token = String::new();

        fn flush_token(
            token: &mut String,
            row: &mut Vec<f64>,
            line: usize,
        ) -> Result<(), CaseError> {
            if token.is_empty() {
                return Ok(());
            }
            let value = match token.as_str() {
                "Inf" | "inf" => f64::INFINITY,
                "-Inf" | "-inf" => f64::NEG_INFINITY,
                t => t
                    .parse::<f64>()
                    .map_err(|_| syntax(line, format!("invalid number `{t}`")))?,
            };
            row.push(value);
            token.clear();
            Ok(())
        }

        loop {
            let c = match self.peek() {
                Some(c) => c,
                None => return Err(syntax(start, "unterminated matrix")),
            };
            match c {
                ']' => {
                    flush_token(&mut token, &mut row, self.line)?;
                    self.bump();
                    if !row.is_empty() {
                        table.rows.push(std::mem::take(&mut row));
                        table.lines.push(row_line);
                    }
                    break;
                }
                '%' => {
                    flush_token(&mut token, &mut row, self.line)?;
                    self.skip_comment();
                }
                ';' | '\n' => {
                    flush_token(&mut token, &mut row, self.line)?;
                    if !row.is_empty() {
                        table.rows.push(std::mem::take(&mut row));
                        table.lines.push(row_line);
                    }
                    self.bump();
                    row_line = self.line;
                }
                ',' | ' ' | '\t' | '\r' => {
                    flush_token(&mut token, &mut row, self.line)?;
                    self.bump();
                }
                '.' if token.is_empty() && self.lookahead_continuation() => {
                    // `...` line continuation
                    self.skip_comment();
                    self.bump();
                }
                c if c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E' | 'I' | 'n' | 'f') => {
                    token.push(c);
                    self.bump();
                }
                other => return Err(syntax(self.line, format!("unexpected character `{other}` in matrix"))),
            }
        }
        Ok(table)
    }

    fn lookahead_continuation(&self) -> bool {
        let mut it = self.chars.clone();
        it.next() == Some('.') && it.next() == Some('.') && it.next() == Some('.')
    }

    fn scalar(&mut self) -> Result<f64, CaseError> {
        let line = self.line;
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c == ';' || c == '\n' || c == '%' {
                break;
            }
            text.push(c);
            self.bump();
        }
        let text = text.trim();
        text.parse::<f64>()
            .map_err(|_| syntax(line, format!("invalid number `{text}`")))
    }
}

fn lex(text: &str) -> Result<RawCase, CaseError> {
    let mut raw = RawCase::default();
    let mut cur = Cursor::new(text);
    loop {
        cur.skip_blank();
        let Some(c) = cur.peek() else { break };
        if !(c.is_alphabetic() || c == '_') {
            if c == ';' {
                cur.bump();
                continue;
            }
            return Err(syntax(cur.line, format!("unexpected character `{c}`")));
        }
        let line = cur.line;
        let word = cur.ident();
        if word == "function" {
            // function mpc = caseNN
            let mut rest = String::new();
            while let Some(c) = cur.peek() {
                if c == '\n' || c == '%' {
                    break;
                }
                rest.push(c);
                cur.bump();
            }
            if let Some((_, name)) = rest.split_once('=') {
                raw.name = name.trim().trim_end_matches(';').to_string();
            }
            continue;
        }
        let Some(field) = word.strip_prefix("mpc.") else {
            return Err(syntax(line, format!("unexpected statement `{word}`")));
        };
        while matches!(cur.peek(), Some(' ' | '\t')) {
            cur.bump();
        }
        if cur.peek() != Some('=') {
            return Err(syntax(cur.line, format!("expected `=` after `{word}`")));
        }
        cur.bump();
        cur.skip_blank();
        match field {
            "baseMVA" => raw.base_mva = Some(cur.scalar()?),
            "bus" | "gen" | "branch" | "gencost" => {
                if cur.peek() != Some('[') {
                    return Err(syntax(cur.line, format!("expected matrix for `{word}`")));
                }
                let table = cur.matrix()?;
                match field {
                    "bus" => raw.bus = Some(table),
                    "gen" => raw.gen = Some(table),
                    "branch" => raw.branch = Some(table),
                    _ => raw.gencost = Some(table),
                }
            }
            _ => match cur.peek() {
                Some('[') => cur.skip_block('[', ']')?,
                Some('{') => cur.skip_block('{', '}')?,
                _ => {}
            },
        }
        cur.skip_statement();
    }
    Ok(raw)
}

fn need_columns(table: &Table, row: usize, count: usize, what: &str) -> Result<(), CaseError> {
    if table.rows[row].len() < count {
        return Err(syntax(
            table.lines[row],
            format!("{what} row has {} columns, expected at least {count}", table.rows[row].len()),
        ));
    }
    Ok(())
}

fn as_index(value: f64, line: usize) -> Result<usize, CaseError> {
    if value.fract() != 0.0 || value < 1.0 {
        return Err(syntax(line, format!("bus number `{value}` is not a positive integer")));
    }
    Ok(value as usize)
}

fn lookup(buses: &[Bus], id: f64, line: usize) -> Result<usize, CaseError> {
    let id = as_index(id, line)?;
    buses
        .iter()
        .position(|b| b.id == id)
        .ok_or_else(|| invalid(format!("line {line}: bus {id}"), Violation::UnknownBus))
}

/// Parses MATPOWER case text into a validated, per-unit [`NetworkCase`].
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    let raw = lex(text)?;
    let base = raw.base_mva.ok_or(CaseError::MissingTable("baseMVA"))?;
    if base.is_nan() || base <= 0.0 {
        return Err(syntax(1, "baseMVA must be positive"));
    }
    let bus_t = raw.bus.ok_or(CaseError::MissingTable("bus"))?;
    let gen_t = raw.gen.ok_or(CaseError::MissingTable("gen"))?;
    let branch_t = raw.branch.ok_or(CaseError::MissingTable("branch"))?;
    let cost_t = raw.gencost.ok_or(CaseError::MissingTable("gencost"))?;

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    for (k, row) in bus_t.rows.iter().enumerate() {
        need_columns(&bus_t, k, 13, "bus")?;
        let line = bus_t.lines[k];
        let id = as_index(row[0], line)?;
        let kind = match row[1] as i64 {
            1 => BusKind::PQ,
            2 => BusKind::PV,
            3 => BusKind::Slack,
            4 => return Err(CaseError::Unsupported(format!("line {line}: isolated bus {id}"))),
            t => return Err(syntax(line, format!("unknown bus type {t}"))),
        };
        buses.push(Bus {
            id,
            kind,
            p_load: row[2] / base,
            q_load: row[3] / base,
            g_shunt: row[4] / base,
            b_shunt: row[5] / base,
            v_max: row[11],
            v_min: row[12],
            v_set: row[7],
        });
    }

    if cost_t.rows.len() < gen_t.rows.len() {
        return Err(syntax(
            cost_t.lines.last().copied().unwrap_or(1),
            format!("{} gencost rows for {} generators", cost_t.rows.len(), gen_t.rows.len()),
        ));
    }
    let mut generators = Vec::with_capacity(gen_t.rows.len());
    for (k, row) in gen_t.rows.iter().enumerate() {
        need_columns(&gen_t, k, 10, "gen")?;
        let line = gen_t.lines[k];
        if row[7] <= 0.0 {
            continue;
        }
        let bus = lookup(&buses, row[0], line)?;
        let (a, b, c) = polynomial_cost(&cost_t, k, base)?;
        generators.push(Generator {
            bus,
            p_set: row[1] / base,
            q_max: row[3] / base,
            q_min: row[4] / base,
            v_set: row[5],
            p_max: row[8] / base,
            p_min: row[9] / base,
            cost_a: a,
            cost_b: b,
            cost_c: c,
        });
    }
    // The first generator's voltage setpoint overrides the bus data at
    // regulated buses.
    let first_gen: Vec<Option<usize>> = {
        let mut first = vec![None; buses.len()];
        for (k, g) in generators.iter().enumerate() {
            first[g.bus].get_or_insert(k);
        }
        first
    };
    for (i, bus) in buses.iter_mut().enumerate() {
        if bus.kind != BusKind::PQ {
            if let Some(k) = first_gen[i] {
                bus.v_set = generators[k].v_set;
            }
        }
    }

    let mut branches = Vec::with_capacity(branch_t.rows.len());
    for (k, row) in branch_t.rows.iter().enumerate() {
        need_columns(&branch_t, k, 11, "branch")?;
        let line = branch_t.lines[k];
        if row[10] <= 0.0 {
            continue;
        }
        if row[9] != 0.0 {
            return Err(CaseError::Unsupported(format!(
                "line {line}: phase-shifting transformers are not supported"
            )));
        }
        let from = lookup(&buses, row[0], line)?;
        let to = lookup(&buses, row[1], line)?;
        let tap = if row[8] == 0.0 { 1.0 } else { row[8] };
        let flow_limit = if row[5] == 0.0 { None } else { Some(row[5] / base) };
        branches.push(Branch {
            from,
            to,
            r: row[2],
            x: row[3],
            b_shunt: row[4],
            tap,
            flow_limit,
        });
    }

    let case = NetworkCase { name: raw.name, base_mva: base, buses, branches, generators };
    case.validate()?;
    Ok(case)
}

/// Returns `(a, b, c)` for cost `a p^2 + b p + c` with `p` in per-unit.
fn polynomial_cost(table: &Table, k: usize, base: f64) -> Result<(f64, f64, f64), CaseError> {
    need_columns(table, k, 4, "gencost")?;
    let row = &table.rows[k];
    let line = table.lines[k];
    if row[0] as i64 != 2 {
        return Err(CaseError::Unsupported(format!(
            "line {line}: only polynomial (model 2) costs are supported"
        )));
    }
    let n = row[3];
    if n.fract() != 0.0 || !(0.0..=3.0).contains(&n) {
        return Err(CaseError::Unsupported(format!(
            "line {line}: polynomial cost of degree {} (at most 2 supported)",
            n - 1.0
        )));
    }
    let n = n as usize;
    need_columns(table, k, 4 + n, "gencost")?;
    // coefficients are listed highest degree first, in $/MW^d
    let mut coef = [0.0; 3];
    for d in 0..n {
        coef[d] = row[4 + n - 1 - d];
    }
    Ok((coef[2] * base * base, coef[1] * base, coef[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "
function mpc = tiny
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 100 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 100 0 200 -200 1.0 100 1 200 0;
];
mpc.branch = [
  1 2 0.01 0.1 0 200 200 200 0 0 1;
];
mpc.gencost = [
  2 0 0 3 0.0001 0 0;
];
";

    #[test]
    fn minimal_two_bus() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.name, "tiny");
        assert_eq!(case.n_buses(), 2);
        assert_eq!(case.n_branches(), 1);
        assert_eq!(case.n_generators(), 1);
        assert_eq!(case.buses[1].p_load, 1.0);
        assert_eq!(case.branches[0].flow_limit, Some(2.0));
        let g = &case.generators[0];
        assert!((g.cost_a - 1.0).abs() < 1e-12);
        assert_eq!(g.p_max, 2.0);
    }

    #[test]
    fn zero_reactance_is_rejected() {
        let text = TWO_BUS.replace("1 2 0.01 0.1 0", "1 2 0.01 0 0");
        let err = parse_case(&text).unwrap_err();
        assert!(
            matches!(err, CaseError::Invalid { violation: Violation::NonPositiveImpedance, .. }),
            "{err}"
        );
        assert!(err.to_string().contains("positive line impedance"));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = TWO_BUS.replace("2 1 100 0", "2 1 1x0 0");
        match parse_case(&text).unwrap_err() {
            CaseError::Syntax { line, .. } => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_slack_is_rejected() {
        let text = TWO_BUS.replace("1 3 0 0", "1 2 0 0");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, CaseError::Invalid { violation: Violation::SlackCount, .. }));
    }

    #[test]
    fn missing_table() {
        let text = TWO_BUS.replace("mpc.gencost", "mpc.other");
        assert_eq!(parse_case(&text).unwrap_err(), CaseError::MissingTable("gencost"));
    }

    #[test]
    fn unknown_fields_and_comments_are_skipped() {
        let text = format!(
            "{TWO_BUS}\nmpc.bus_name = {{\n 'A';\n 'B';\n}};\nmpc.areas = [1 1];\n% trailing"
        );
        assert!(parse_case(&text).is_ok());
    }

    #[test]
    fn comma_separated_rows() {
        let text = TWO_BUS.replace("1 2 0.01 0.1 0 200 200 200 0 0 1;", "1, 2, 0.01, 0.1, 0, 200, 200, 200, 0, 0, 1");
        assert!(parse_case(&text).is_ok());
    }

    #[test]
    fn out_of_service_rows_are_dropped() {
        let text = TWO_BUS.replace(
            "1 2 0.01 0.1 0 200 200 200 0 0 1;",
            "1 2 0.01 0.1 0 200 200 200 0 0 1;\n 1 2 0.02 0.2 0 0 0 0 0 0 0;",
        );
        assert_eq!(parse_case(&text).unwrap().n_branches(), 1);
    }

    #[test]
    fn linear_and_cubic_costs() {
        let text = TWO_BUS.replace("2 0 0 3 0.0001 0 0;", "2 0 0 2 15 7;");
        let g = &parse_case(&text).unwrap().generators[0];
        assert_eq!((g.cost_a, g.cost_b, g.cost_c), (0.0, 1500.0, 7.0));
        let text = TWO_BUS.replace("2 0 0 3 0.0001 0 0;", "2 0 0 4 1 1 1 1;");
        assert!(matches!(parse_case(&text), Err(CaseError::Unsupported(_))));
    }

    #[test]
    fn parsing_is_deterministic() {
        assert_eq!(parse_case(TWO_BUS).unwrap(), parse_case(TWO_BUS).unwrap());
    }
}
