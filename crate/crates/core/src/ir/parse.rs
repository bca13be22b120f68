use thiserror::Error;

use super::verify::{verify_module, Violation};
use super::{
    binop_from_mnemonic, fits, from_signed, AttrValue, Attrs, CastOp, EncodingField, ForLoop,
    Arg, Function, InstructionDescriptor, MacroSpec, Module, Op, OpKind, Pred, Type, Value,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("verification failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Verify(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    MemRef(String),
    Percent(String),
    At(String),
    Int(i128),
    Str(String),
    Arrow,
    Punct(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::MemRef(s) => format!("`memref<{s}>`"),
            Tok::Percent(s) => format!("`%{s}`"),
            Tok::At(s) => format!("`@{s}`"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Arrow => "`->`".to_string(),
            Tok::Punct(c) => format!("`{c}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$'
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, message: String| ParseError::Syntax { line, col, message };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '%' || c == '@' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && is_name_char(chars[j]) {
                j += 1;
            }
            if j == start {
                return Err(err(tl, tc, format!("expected a name after `{c}`")));
            }
            let name: String = chars[start..j].iter().collect();
            toks.push(Token {
                tok: if c == '%' { Tok::Percent(name) } else { Tok::At(name) },
                line: tl,
                col: tc,
            });
            advance(j - i, &mut i, &mut col);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            toks.push(Token { tok: Tok::Arrow, line: tl, col: tc });
            advance(2, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let s: String = chars[i..j].iter().collect();
            let v = match s.parse::<i128>() {
                Ok(v) => v,
                Err(_) => match s.parse::<u128>() {
                    Ok(v) => v as i128,
                    Err(_) => return Err(err(tl, tc, format!("integer literal `{s}` out of range"))),
                },
            };
            toks.push(Token { tok: Tok::Int(v), line: tl, col: tc });
            advance(j - i, &mut i, &mut col);
            continue;
        }
        if c == '"' {
            let mut j = i + 1;
            let mut s = String::new();
            loop {
                match chars.get(j) {
                    None | Some('\n') => return Err(err(tl, tc, "unterminated string".into())),
                    Some('"') => break,
                    Some('\\') => {
                        match chars.get(j + 1) {
                            Some('n') => s.push('\n'),
                            Some(&e) => s.push(e),
                            None => return Err(err(tl, tc, "unterminated string".into())),
                        }
                        j += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            toks.push(Token { tok: Tok::Str(s), line: tl, col: tc });
            advance(j + 1 - i, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && is_name_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            if word == "memref" && chars.get(j) == Some(&'<') {
                let mut k = j + 1;
                while k < chars.len() && chars[k] != '>' && chars[k] != '\n' {
                    k += 1;
                }
                if chars.get(k) != Some(&'>') {
                    return Err(err(tl, tc, "unterminated memref type".into()));
                }
                let inner: String = chars[j + 1..k].iter().collect();
                toks.push(Token { tok: Tok::MemRef(inner), line: tl, col: tc });
                advance(k + 1 - i, &mut i, &mut col);
            } else {
                toks.push(Token { tok: Tok::Ident(word), line: tl, col: tc });
                advance(j - i, &mut i, &mut col);
            }
            continue;
        }
        if "(){}[],:=".contains(c) {
            toks.push(Token { tok: Tok::Punct(c), line: tl, col: tc });
            advance(1, &mut i, &mut col);
            continue;
        }
        return Err(err(tl, tc, format!("unexpected character `{c}`")));
    }
    toks.push(Token { tok: Tok::Eof, line, col });
    Ok(toks)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        let found = self.peek().describe();
        self.error(format!("expected {wanted}, found {found}"))
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if *self.peek() == Tok::Punct(c) {
            self.next();
            Ok(())
        } else {
            self.unexpected(&format!("`{c}`"))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.next();
                Ok(())
            }
            _ => self.unexpected(&format!("`{kw}`")),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect_ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            _ => self.unexpected("an identifier"),
        }
    }

    fn expect_value(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Percent(s) => {
                self.next();
                Ok(s)
            }
            _ => self.unexpected("a value `%name`"),
        }
    }

    fn expect_int(&mut self) -> PResult<i128> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.next();
                Ok(v)
            }
            _ => self.unexpected("an integer"),
        }
    }

    fn expect_str(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(s)
            }
            _ => self.unexpected("a string"),
        }
    }

    fn parse_type(&mut self) -> PResult<Type> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "index" => {
                self.next();
                Ok(Type::Index)
            }
            Tok::Ident(s) if s.starts_with('i') && s.len() > 1 => match s[1..].parse::<u32>() {
                Ok(w) => {
                    self.next();
                    Ok(Type::Int(w))
                }
                Err(_) => self.unexpected("a type"),
            },
            Tok::MemRef(inner) => {
                let parts: Vec<&str> = inner.split('x').collect();
                let bad = || format!("malformed memref type `memref<{inner}>`");
                if parts.len() < 2 {
                    return self.error(bad());
                }
                let mut shape = Vec::new();
                for p in &parts[..parts.len() - 1] {
                    match p.trim().parse::<u64>() {
                        Ok(e) => shape.push(e),
                        Err(_) => return self.error(bad()),
                    }
                }
                let elem = parts[parts.len() - 1].trim();
                let width = elem
                    .strip_prefix('i')
                    .and_then(|w| w.parse::<u32>().ok());
                match width {
                    Some(w) => {
                        self.next();
                        Ok(Type::MemRef { shape, elem: w })
                    }
                    None => self.error(bad()),
                }
            }
            _ => self.unexpected("a type"),
        }
    }

    fn parse_attr_value(&mut self) -> PResult<AttrValue> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.next();
                Ok(AttrValue::Int(v))
            }
            Tok::Str(s) => {
                self.next();
                Ok(AttrValue::Str(s))
            }
            Tok::Punct('[') => {
                self.next();
                let mut items = Vec::new();
                if !self.eat_punct(']') {
                    loop {
                        items.push(self.expect_int()?);
                        if self.eat_punct(']') {
                            break;
                        }
                        self.expect_punct(',')?;
                    }
                }
                Ok(AttrValue::List(items))
            }
            _ => self.unexpected("an annotation value"),
        }
    }

    /// `{ key = value ... }`; reserved keys are returned separately.
    fn parse_attr_block(&mut self, reserved: &str) -> PResult<(Attrs, Option<String>)> {
        self.expect_punct('{')?;
        let mut attrs = Attrs::new();
        let mut reserved_value = None;
        while !self.eat_punct('}') {
            let key = self.expect_ident()?;
            self.expect_punct('=')?;
            let value = self.parse_attr_value()?;
            if key == reserved {
                match value {
                    AttrValue::Str(s) => reserved_value = Some(s),
                    _ => return self.error(format!("`{reserved}` must be a string")),
                }
            } else {
                attrs.insert(key, value);
            }
            self.eat_punct(',');
        }
        Ok((attrs, reserved_value))
    }

    fn parse_module(&mut self) -> PResult<Module> {
        let mut m = Module::default();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(s) if s == "descriptor" => m.descriptors.push(self.parse_descriptor()?),
                Tok::Ident(s) if s == "func" => m.functions.push(self.parse_function()?),
                _ => return self.unexpected("`descriptor` or `func`"),
            }
        }
        Ok(m)
    }

    fn parse_descriptor(&mut self) -> PResult<InstructionDescriptor> {
        self.expect_keyword("descriptor")?;
        let mut d = InstructionDescriptor::new(self.expect_str()?);
        self.expect_punct('{')?;
        while !self.eat_punct('}') {
            let section = self.expect_ident()?;
            self.expect_punct(':')?;
            match section.as_str() {
                "controls" => {
                    while let Tok::Str(_) = self.peek() {
                        let key = self.expect_str()?;
                        self.expect_punct('=')?;
                        self.expect_punct('[')?;
                        let mut vals = vec![self.expect_int()?];
                        while self.eat_punct(',') {
                            vals.push(self.expect_int()?);
                        }
                        self.expect_punct(']')?;
                        d.fixed_controls.insert(key, vals);
                    }
                }
                "asvs" => {
                    if !matches!(self.peek(), Tok::Str(_)) {
                        return self.unexpected("an ASV name");
                    }
                    while let Tok::Str(_) = self.peek() {
                        d.asvs.push(self.expect_str()?);
                    }
                }
                "encoding" => {
                    while let Tok::Str(_) = self.peek() {
                        let key = self.expect_str()?;
                        self.expect_punct('=')?;
                        let register = self.expect_str()?;
                        self.expect_punct('[')?;
                        let hi = self.expect_int()?;
                        self.expect_punct(':')?;
                        let lo = self.expect_int()?;
                        self.expect_punct(']')?;
                        if lo < 0 || hi < lo || hi > 127 {
                            return self.error(format!("invalid bit range [{hi}:{lo}]"));
                        }
                        d.encoding.insert(
                            key,
                            EncodingField {
                                register,
                                hi: hi as u32,
                                lo: lo as u32,
                            },
                        );
                    }
                }
                "macro" => {
                    let primitive = self.expect_str()?;
                    self.expect_keyword("bounds")?;
                    let mut bounds = vec![self.expect_str()?];
                    while let Tok::Str(_) = self.peek() {
                        bounds.push(self.expect_str()?);
                    }
                    d.macro_spec = Some(MacroSpec { primitive, bounds });
                }
                "hint" => d.hint = Some(self.expect_str()?),
                other => return self.error(format!("unknown descriptor section `{other}`")),
            }
        }
        Ok(d)
    }

    fn parse_function(&mut self) -> PResult<Function> {
        self.expect_keyword("func")?;
        let name = match self.next() {
            Tok::At(n) => n,
            _ => {
                self.pos -= 1;
                return self.unexpected("a function name `@name`");
            }
        };
        self.expect_punct('(')?;
        let mut args = Vec::new();
        if !self.eat_punct(')') {
            loop {
                let arg_name = self.expect_value()?;
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                let (attrs, signal) = if *self.peek() == Tok::Punct('{') {
                    self.parse_attr_block("signal")?
                } else {
                    (Attrs::new(), None)
                };
                args.push(Arg {
                    name: arg_name,
                    ty,
                    signal: signal.unwrap_or_default(),
                    attrs,
                });
                if self.eat_punct(')') {
                    break;
                }
                self.expect_punct(',')?;
            }
        }
        let (attrs, asv) = if self.is_keyword("attributes") {
            self.next();
            self.parse_attr_block("asv")?
        } else {
            (Attrs::new(), None)
        };
        let target_asv = asv.unwrap_or_else(|| match name.find("__") {
            Some(i) => name[i + 2..].to_string(),
            None => name.clone(),
        });
        let body = self.parse_region()?;
        Ok(Function {
            name,
            args,
            body,
            target_asv,
            attrs,
        })
    }

    fn parse_region(&mut self) -> PResult<Vec<Op>> {
        self.expect_punct('{')?;
        let mut ops = Vec::new();
        while !self.eat_punct('}') {
            if *self.peek() == Tok::Eof {
                return self.unexpected("`}`");
            }
            ops.push(self.parse_op()?);
        }
        Ok(ops)
    }

    fn parse_operands(&mut self) -> PResult<Vec<String>> {
        let mut v = vec![self.expect_value()?];
        while self.eat_punct(',') {
            v.push(self.expect_value()?);
        }
        Ok(v)
    }

    fn parse_indices(&mut self) -> PResult<Vec<String>> {
        self.expect_punct('[')?;
        let mut v = Vec::new();
        if !self.eat_punct(']') {
            v = self.parse_operands()?;
            self.expect_punct(']')?;
        }
        Ok(v)
    }

    fn parse_result_types(&mut self) -> PResult<Vec<Type>> {
        let mut v = Vec::new();
        if *self.peek() == Tok::Arrow {
            self.next();
            v.push(self.parse_type()?);
            while self.eat_punct(',') {
                v.push(self.parse_type()?);
            }
        }
        Ok(v)
    }

    fn parse_trailing_attrs(&mut self) -> PResult<Attrs> {
        if *self.peek() == Tok::Punct('{') {
            Ok(self.parse_attr_block("")?.0)
        } else {
            Ok(Attrs::new())
        }
    }

    fn parse_op(&mut self) -> PResult<Op> {
        let mut result_names = Vec::new();
        if let Tok::Percent(_) = self.peek() {
            result_names = self.parse_operands()?;
            self.expect_punct('=')?;
        }
        let op_line = self.toks[self.pos].line;
        let op_col = self.toks[self.pos].col;
        let opcode = self.expect_ident()?;
        let single = |p: &Parser, ty: Type| -> PResult<Vec<Value>> {
            if result_names.len() != 1 {
                return Err(ParseError::Syntax {
                    line: op_line,
                    col: op_col,
                    message: format!("`{opcode}` defines exactly one result"),
                });
            }
            let _ = p;
            Ok(vec![Value::new(result_names[0].clone(), ty)])
        };

        let mut op = match opcode.as_str() {
            "const" => {
                let v = self.expect_int()?;
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                let bits = match &ty {
                    Type::Int(w) if fits(v, *w) => from_signed(v, *w),
                    Type::Index if v >= i64::MIN as i128 && v <= i64::MAX as i128 => {
                        from_signed(v, 64)
                    }
                    Type::MemRef { .. } => return self.error("constants must be scalar"),
                    _ => return self.error(format!("constant {v} does not fit in {ty}")),
                };
                Op::new(OpKind::Const(bits), single(self, ty)?, vec![])
            }
            "extsi" | "extui" | "trunci" => {
                let src = self.expect_value()?;
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                let cast = match opcode.as_str() {
                    "extsi" => CastOp::ExtS,
                    "extui" => CastOp::ExtU,
                    _ => CastOp::Trunc,
                };
                Op::new(OpKind::Cast(cast), single(self, ty)?, vec![src])
            }
            "cmpi" => {
                let pred_name = self.expect_ident()?;
                let Some(pred) = Pred::from_mnemonic(&pred_name) else {
                    return self.error(format!("unknown predicate `{pred_name}`"));
                };
                let operands = self.parse_operands()?;
                let ty = if self.eat_punct(':') { self.parse_type()? } else { Type::Int(1) };
                Op::new(OpKind::Cmp(pred), single(self, ty)?, operands)
            }
            "select" => {
                let operands = self.parse_operands()?;
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                Op::new(OpKind::Select, single(self, ty)?, operands)
            }
            "memref.load" => {
                let mem = self.expect_value()?;
                let mut operands = vec![mem];
                operands.extend(self.parse_indices()?);
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                Op::new(OpKind::Load, single(self, ty)?, operands)
            }
            "memref.store" => {
                let val = self.expect_value()?;
                self.expect_punct(',')?;
                let mem = self.expect_value()?;
                let mut operands = vec![val, mem];
                operands.extend(self.parse_indices()?);
                self.expect_punct(':')?;
                let ty = self.parse_type()?;
                Op::new(OpKind::Store, single(self, ty)?, operands)
            }
            "scf.yield" | "return" => {
                if !result_names.is_empty() {
                    return self.error(format!("`{opcode}` defines no results"));
                }
                let operands = if let Tok::Percent(_) = self.peek() {
                    self.parse_operands()?
                } else {
                    vec![]
                };
                let kind = if opcode == "return" { OpKind::Return } else { OpKind::Yield };
                Op::new(kind, vec![], operands)
            }
            "scf.if" => {
                let cond = self.expect_value()?;
                let types = self.parse_result_types()?;
                if types.len() != result_names.len() {
                    return self.error("result count does not match `->` types");
                }
                let then = self.parse_region()?;
                let mut regions = vec![then];
                if self.is_keyword("else") {
                    self.next();
                    regions.push(self.parse_region()?);
                }
                let results = result_names
                    .iter()
                    .cloned()
                    .zip(types)
                    .map(|(n, t)| Value::new(n, t))
                    .collect();
                Op::new(OpKind::If, results, vec![cond]).with_regions(regions)
            }
            "scf.for" => {
                let iv = self.expect_value()?;
                self.expect_punct('=')?;
                let lower = self.expect_int()?;
                self.expect_keyword("to")?;
                let upper = self.expect_int()?;
                self.expect_keyword("step")?;
                let step = self.expect_int()?;
                let mut iter_args = Vec::new();
                let mut inits = Vec::new();
                if self.is_keyword("iter_args") {
                    self.next();
                    self.expect_punct('(')?;
                    if !self.eat_punct(')') {
                        loop {
                            iter_args.push(self.expect_value()?);
                            self.expect_punct('=')?;
                            inits.push(self.expect_value()?);
                            if self.eat_punct(')') {
                                break;
                            }
                            self.expect_punct(',')?;
                        }
                    }
                }
                let types = self.parse_result_types()?;
                if types.len() != result_names.len() {
                    return self.error("result count does not match `->` types");
                }
                let body = self.parse_region()?;
                let bound = |v: i128| i64::try_from(v).ok();
                let (Some(lower), Some(upper), Some(step)) = (bound(lower), bound(upper), bound(step))
                else {
                    return self.error("loop bounds out of range");
                };
                let results = result_names
                    .iter()
                    .cloned()
                    .zip(types)
                    .map(|(n, t)| Value::new(n, t))
                    .collect();
                Op::new(
                    OpKind::For(ForLoop {
                        lower,
                        upper,
                        step,
                        iv,
                        iter_args,
                    }),
                    results,
                    inits,
                )
                .with_regions(vec![body])
            }
            other => match binop_from_mnemonic(other) {
                Some(bin) => {
                    let operands = self.parse_operands()?;
                    self.expect_punct(':')?;
                    let ty = self.parse_type()?;
                    Op::new(OpKind::Binary(bin), single(self, ty)?, operands)
                }
                None => {
                    return Err(ParseError::Syntax {
                        line: op_line,
                        col: op_col,
                        message: format!("unknown opcode `{other}`"),
                    })
                }
            },
        };
        op.attrs = self.parse_trailing_attrs()?;
        Ok(op)
    }
}

fn parser(text: &str) -> PResult<Parser> {
    Ok(Parser {
        toks: lex(text)?,
        pos: 0,
    })
}

/// Parses and verifies a module.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    let m = parser(text)?.parse_module()?;
    let violations = verify_module(&m);
    if violations.is_empty() {
        Ok(m)
    } else {
        Err(ParseError::Verify(violations))
    }
}

/// Parses a single function without verifying it.
pub fn parse_function(text: &str) -> Result<Function, ParseError> {
    let mut p = parser(text)?;
    let f = p.parse_function()?;
    if *p.peek() != Tok::Eof {
        return p.unexpected("end of input");
    }
    Ok(f)
}

/// Parses a file holding only descriptors (functions, if any, are ignored).
pub fn parse_descriptors(text: &str) -> Result<Vec<InstructionDescriptor>, ParseError> {
    Ok(parser(text)?.parse_module()?.descriptors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::print_module;

    #[test]
    fn smallest_function() {
        let m = parse_module(
            "func @i__s(%x: i8 {signal = \"x\"}) {\n  %0 = const 0 : i8\n  return %0\n}\n",
        )
        .unwrap();
        assert_eq!(m.functions.len(), 1);
        assert_eq!(m.functions[0].body.len(), 2);
        assert_eq!(m.functions[0].target_asv, "s");
    }

    #[test]
    fn undefined_value_is_named() {
        let err = parse_module(
            "func @i__s(%x: i8 {signal = \"x\"}) {\n  %1 = addi %x, %9 : i8\n  return %1\n}\n",
        )
        .unwrap_err();
        match err {
            ParseError::Verify(v) => assert!(v.iter().any(|v| v.to_string().contains("%9"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_module("func @f(%x: i8 {signal = \"x\"}) {\n  %1 = bogus %x : i8\n}\n")
            .unwrap_err();
        match err {
            ParseError::Syntax { line, col, .. } => assert_eq!((line, col), (2, 8)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let text = r#"descriptor "mvin3" {
  controls: "bank" = [2]
  asvs: "spad_row" "dram_req_addr"
  encoding: "bank" = "rs1"[4:3]
  macro: "pe" bounds "I" "J" "K"
}
"#;
        let m = parse_module(text).unwrap();
        let d = &m.descriptors[0];
        assert_eq!(d.fixed_controls["bank"], vec![2]);
        assert_eq!(d.encoding["bank"].to_string(), "rs1[4:3]");
        assert_eq!(d.macro_spec.as_ref().unwrap().bounds.len(), 3);
        let printed = print_module(&m);
        assert_eq!(parse_module(&printed).unwrap(), m);
    }

    #[test]
    fn regions_and_annotations() {
        let text = r#"
func @dot__acc(%a: memref<4xi8> {signal = "in_a"}, %b: memref<4xi8> {signal = "in_b"}, %c: i32 {signal = "acc"}) {
  %r = scf.for %i = 0 to 4 step 1 iter_args(%s = %c) -> i32 {
    %x = memref.load %a[%i] : i8
    %y = memref.load %b[%i] : i8
    %xe = extsi %x : i32
    %ye = extsi %y : i32
    %p = muli %xe, %ye : i32
    %n = addi %s, %p : i32 {atlaas.mac = "lhs=%x:8 rhs=%y:8 acc=%s"}
    scf.yield %n
  } {linalg_op = "dot_product"}
  %z = const 0 : i1
  %q = scf.if %z -> i32 {
    scf.yield %r
  } else {
    scf.yield %c
  }
  return %q
}
"#;
        let m = parse_module(text).unwrap();
        let f = &m.functions[0];
        assert_eq!(f.op_count(), 13);
        let printed = print_module(&m);
        let again = parse_module(&printed).unwrap();
        assert_eq!(again, m);
        assert_eq!(print_module(&again), printed);
    }
}
