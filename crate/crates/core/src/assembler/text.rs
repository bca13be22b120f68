//! TAIDL builder text: the spec data model, its serializer and the parser
//! used to re-read emitted output.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataModel {
    pub name: String,
    pub dims: String,
    pub shape: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankedRegister {
    pub base: String,
    pub count: usize,
    pub select: String,
}

/// `%result = op(args...)`; arguments are kept as written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub result: String,
    pub op: String,
    pub args: Vec<String>,
}

impl Statement {
    pub fn new(result: impl Into<String>, op: &str, args: Vec<String>) -> Self {
        Statement {
            result: result.into(),
            op: op.to_string(),
            args,
        }
    }

    /// Names referenced with `%`, including inside bracketed arguments.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for a in &self.args {
            let mut rest = a.as_str();
            while let Some(i) = rest.find('%') {
                rest = &rest[i + 1..];
                let end = rest
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
                    .unwrap_or(rest.len());
                out.push(&rest[..end]);
                rest = &rest[end..];
            }
        }
        out
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{} = {}({})", self.result, self.op, self.args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub name: String,
    pub operands: Vec<String>,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    pub before: String,
    pub after: String,
    pub via: String,
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} before {} via {}", self.before, self.after, self.via)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TaidlSpec {
    pub data_models: Vec<DataModel>,
    pub banked: Vec<BankedRegister>,
    pub instructions: Vec<Instruction>,
    pub orderings: Vec<Ordering>,
}

fn quoted_list(items: &[String]) -> String {
    let q: Vec<String> = items.iter().map(|s| format!("\"{s}\"")).collect();
    format!("[{}]", q.join(", "))
}

impl TaidlSpec {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.data_models {
            out.push_str(&format!(
                "acc.add_data_model(\"{}\", \"{}\", \"{}\")\n",
                d.name, d.dims, d.shape
            ));
        }
        if !self.data_models.is_empty() {
            out.push('\n');
        }
        for b in &self.banked {
            out.push_str(&format!("# banked: {} x {} select {}\n", b.base, b.count, b.select));
        }
        if !self.banked.is_empty() {
            out.push('\n');
        }
        for i in &self.instructions {
            out.push_str(&format!(
                "instr = acc.add_instruction(\"{}\", {})\n",
                i.name,
                quoted_list(&i.operands)
            ));
            out.push_str("instr.add_semantics(\"\"\"\n");
            for s in &i.body {
                out.push_str(&format!("  {s}\n"));
            }
            out.push_str("\"\"\")\n\n");
        }
        for o in &self.orderings {
            out.push_str(&format!("# order: {o}\n"));
        }
        out
    }

    pub fn instruction(&self, name: &str) -> Option<&Instruction> {
        self.instructions.iter().find(|i| i.name == name)
    }

    /// Structural checks: unique names, bodies in SSA form referencing only
    /// declared data models, operands, banked registers, architectural
    /// registers (non-temporary results) or earlier results,
    /// and orderings naming declared instructions.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let models: HashSet<&str> = self.data_models.iter().map(|d| d.name.as_str()).collect();
        if models.len() != self.data_models.len() {
            problems.push("duplicate data model".to_string());
        }
        let banks: HashSet<&str> = self.banked.iter().map(|b| b.base.as_str()).collect();
        let registers: HashSet<&str> = self
            .instructions
            .iter()
            .flat_map(|i| &i.body)
            .map(|s| s.result.as_str())
            .filter(|r| !is_temporary(r))
            .collect();
        let mut names = HashSet::new();
        for i in &self.instructions {
            if !names.insert(i.name.as_str()) {
                problems.push(format!("duplicate instruction `{}`", i.name));
            }
            if i.body.is_empty() {
                problems.push(format!("`{}` has an empty body", i.name));
            }
            let mut defined: HashSet<&str> = HashSet::new();
            for s in &i.body {
                for r in s.references() {
                    let known = defined.contains(r)
                        || models.contains(r)
                        || banks.contains(r)
                        || registers.contains(r)
                        || i.operands.iter().any(|o| o == r);
                    if !known {
                        problems.push(format!("`{}`: undeclared reference %{r}", i.name));
                    }
                }
                if !defined.insert(&s.result) {
                    problems.push(format!("`{}`: %{} defined twice", i.name, s.result));
                }
            }
        }
        for o in &self.orderings {
            for n in [&o.before, &o.after] {
                if !names.contains(n.as_str()) {
                    problems.push(format!("ordering names unknown instruction `{n}`"));
                }
            }
        }
        problems
    }
}

/// `t0`, `t1`, ... name instruction-local temporaries.
pub fn is_temporary(name: &str) -> bool {
    name.strip_prefix('t')
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct TaidlParseError {
    pub line: usize,
    pub message: String,
}

/// Splits on commas that are not nested in brackets or braces.
fn split_args(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn parse_strings(s: &str) -> Option<Vec<String>> {
    split_args(s)
        .into_iter()
        .map(|a| {
            a.strip_prefix('"')
                .and_then(|a| a.strip_suffix('"'))
                .map(str::to_string)
        })
        .collect()
}

fn parse_statement(line: &str) -> Option<Statement> {
    let rest = line.strip_prefix('%')?;
    let (result, rhs) = rest.split_once(" = ")?;
    let open = rhs.find('(')?;
    let op = &rhs[..open];
    let inner = rhs[open + 1..].strip_suffix(')')?;
    let valid = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !valid(result) || !valid(op) {
        return None;
    }
    Some(Statement::new(result, op, split_args(inner)))
}

/// Parses text produced by [`TaidlSpec::to_text`], enforcing the section
/// order data models, banked registers, instructions, orderings.
pub fn parse_taidl(text: &str) -> Result<TaidlSpec, TaidlParseError> {
    let mut spec = TaidlSpec::default();
    let mut section = 0;
    let mut lines = text.lines().enumerate().peekable();
    let err = |line: usize, message: &str| TaidlParseError {
        line: line + 1,
        message: message.to_string(),
    };
    let mut advance = |n: usize, line: usize, what: &str| {
        if n < section {
            return Err(err(line, &format!("{what} out of order")));
        }
        section = n;
        Ok(())
    };
    while let Some((ln, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(args) = line
            .strip_prefix("acc.add_data_model(")
            .and_then(|r| r.strip_suffix(')'))
        {
            advance(0, ln, "data model")?;
            let [name, dims, shape]: [String; 3] = parse_strings(args)
                .and_then(|v| v.try_into().ok())
                .ok_or_else(|| err(ln, "data model takes three strings"))?;
            spec.data_models.push(DataModel { name, dims, shape });
        } else if let Some(rest) = line.strip_prefix("# banked: ") {
            advance(1, ln, "banked register")?;
            let parts: Vec<&str> = rest.split(' ').collect();
            let [base, "x", count, "select", select] = parts.as_slice() else {
                return Err(err(ln, "expected `# banked: NAME x COUNT select FIELD`"));
            };
            let count = count.parse().map_err(|_| err(ln, "bad bank count"))?;
            spec.banked.push(BankedRegister {
                base: base.to_string(),
                count,
                select: select.to_string(),
            });
        } else if let Some(args) = line
            .strip_prefix("instr = acc.add_instruction(")
            .and_then(|r| r.strip_suffix(')'))
        {
            advance(2, ln, "instruction")?;
            let parts = split_args(args);
            let [name, regs] = parts.as_slice() else {
                return Err(err(ln, "instruction takes a name and a register list"));
            };
            let name = parse_strings(name)
                .and_then(|v| v.into_iter().next())
                .ok_or_else(|| err(ln, "bad instruction name"))?;
            let regs = regs
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .and_then(parse_strings)
                .ok_or_else(|| err(ln, "bad register list"))?;
            match lines.next() {
                Some((_, l)) if l.trim() == "instr.add_semantics(\"\"\"" => {}
                _ => return Err(err(ln + 1, "expected `instr.add_semantics(\"\"\"`")),
            }
            let mut body = Vec::new();
            loop {
                let Some((bl, l)) = lines.next() else {
                    return Err(err(ln, "unterminated semantics body"));
                };
                let l = l.trim();
                if l == "\"\"\")" {
                    break;
                }
                body.push(parse_statement(l).ok_or_else(|| err(bl, "malformed statement"))?);
            }
            if body.is_empty() {
                return Err(err(ln, "empty semantics body"));
            }
            spec.instructions.push(Instruction {
                name,
                operands: regs,
                body,
            });
        } else if let Some(rest) = line.strip_prefix("# order: ") {
            advance(3, ln, "ordering")?;
            let parts: Vec<&str> = rest.split(' ').collect();
            let [before, "before", after, "via", via] = parts.as_slice() else {
                return Err(err(ln, "expected `# order: NAME before NAME via STATE`"));
            };
            spec.orderings.push(Ordering {
                before: before.to_string(),
                after: after.to_string(),
                via: via.to_string(),
            });
        } else {
            return Err(err(ln, "unrecognised line"));
        }
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TaidlSpec {
        TaidlSpec {
            data_models: vec![DataModel {
                name: "in_a".into(),
                dims: "1".into(),
                shape: "4xs8".into(),
            }],
            banked: vec![BankedRegister {
                base: "strides".into(),
                count: 3,
                select: "rs1[4:3]".into(),
            }],
            instructions: vec![Instruction {
                name: "k".into(),
                operands: vec!["rs1".into()],
                body: vec![
                    Statement::new("t0", "convert", vec!["%in_a".into(), "s32".into()]),
                    Statement::new(
                        "out",
                        "load",
                        vec!["%t0".into(), "stride=%strides[rs1[4:3]]".into(), "dims={0, 1}".into()],
                    ),
                ],
            }],
            orderings: vec![Ordering {
                before: "k".into(),
                after: "k".into(),
                via: "state".into(),
            }],
        }
    }

    #[test]
    fn text_round_trips() {
        let spec = sample();
        let text = spec.to_text();
        assert_eq!(parse_taidl(&text).unwrap(), spec);
        assert!(spec.check().is_empty(), "{:?}", spec.check());
    }

    #[test]
    fn check_flags_undeclared_names() {
        let mut spec = sample();
        spec.instructions[0].body[0].args[0] = "%nowhere".into();
        spec.orderings[0].after = "ghost".into();
        assert_eq!(spec.check().len(), 2);
    }

    #[test]
    fn sections_must_be_ordered() {
        let text = "# order: a before b via s\nacc.add_data_model(\"x\", \"1\", \"1xs8\")\n";
        assert_eq!(parse_taidl(text).unwrap_err().line, 2);
        assert!(parse_taidl("bogus\n").is_err());
        assert_eq!(parse_taidl("").unwrap(), TaidlSpec::default());
    }
}
