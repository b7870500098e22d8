use super::{BinOp, Expr, Extent, FuncDef, FuncId, FuncKind, Index, Intrinsic, Pipeline, DIM_NAMES};
use std::collections::HashMap;
use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String },
    #[error("{span}: unknown identifier `{name}`")]
    UnknownIdentifier { span: Span, name: String },
    #[error("{span}: `{name}` takes {expected} argument(s), found {found}")]
    Arity { span: Span, name: String, expected: usize, found: usize },
    #[error("{span}: cyclic dependency through `{name}`")]
    Cycle { span: Span, name: String },
    #[error("{span}: access argument is not of the form `var + constant`: {message}")]
    NonAffine { span: Span, message: String },
    #[error("{span}: {message}")]
    Invalid { span: Span, message: String },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::UnknownIdentifier { span, .. }
            | ParseError::Arity { span, .. }
            | ParseError::Cycle { span, .. }
            | ParseError::NonAffine { span, .. }
            | ParseError::Invalid { span, .. } => *span,
        }
    }
}

fn syntax(span: Span, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { span, message: message.into() }
}

fn invalid(span: Span, message: impl Into<String>) -> ParseError {
    ParseError::Invalid { span, message: message.into() }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn lex_line(text: &str, line: usize, col0: usize, out: &mut Vec<Token>) -> Result<(), ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let span = Span { line, col: col0 + i };
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), span });
        } else if ch.is_ascii_digit() || (ch == '.' && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // optional exponent
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| syntax(span, format!("malformed number `{s}`")))?;
            out.push(Token { tok: Tok::Num(v), span });
        } else if "()+-*/,=:".contains(ch) {
            out.push(Token { tok: Tok::Sym(ch), span });
            i += 1;
        } else {
            return Err(syntax(span, format!("unexpected character `{ch}`")));
        }
    }
    Ok(())
}

/// A logical statement: one line plus any indented continuation lines.
struct Stmt {
    tokens: Vec<Token>,
    end: Span,
}

fn split_statements(text: &str) -> Result<Vec<Stmt>, ParseError> {
    let mut stmts: Vec<Stmt> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        if body.trim().is_empty() {
            continue;
        }
        let continuation = body.starts_with(|c: char| c.is_whitespace());
        let mut toks = Vec::new();
        lex_line(body, line, 1, &mut toks)?;
        let end = Span { line, col: body.chars().count() + 1 };
        match stmts.last_mut() {
            Some(prev) if continuation => {
                prev.tokens.extend(toks);
                prev.end = end;
            }
            _ => {
                stmts.push(Stmt { tokens: toks, end });
            }
        }
    }
    Ok(stmts)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    end: Span,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks.get(self.pos).map(|t| t.span).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(syntax(self.span(), format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        let span = self.span();
        match self.next() {
            Some(Token { tok: Tok::Ident(s), .. }) => Ok((s.clone(), span)),
            _ => Err(syntax(span, "expected identifier")),
        }
    }

    fn done(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(syntax(self.span(), "unexpected trailing input"))
        } else {
            Ok(())
        }
    }
}

fn parse_extent(c: &mut Cursor<'_>) -> Result<Extent, ParseError> {
    // `256x256x3` lexes as Num(256) Ident("x256x3").
    let span = c.span();
    let first = match c.next() {
        Some(Token { tok: Tok::Num(v), .. }) => *v,
        _ => return Err(syntax(span, "expected extent such as 256x256")),
    };
    let mut sizes = vec![first];
    if let Some(Tok::Ident(rest)) = c.peek() {
        c.pos += 1;
        let mut parts = rest.split('x');
        if parts.next() != Some("") {
            return Err(syntax(span, "malformed extent"));
        }
        for p in parts {
            let v: f64 = p.parse().map_err(|_| syntax(span, "malformed extent"))?;
            sizes.push(v);
        }
    }
    if sizes.len() > 3 || sizes.iter().any(|&s| s < 1.0 || s.fract() != 0.0) {
        return Err(invalid(span, "extent needs 1 to 3 positive integer sizes"));
    }
    Ok(Extent(sizes.into_iter().map(|s| s as i64).collect()))
}

fn parse_vars(c: &mut Cursor<'_>) -> Result<usize, ParseError> {
    c.expect('(')?;
    let mut n = 0;
    loop {
        let (v, span) = c.ident()?;
        if n >= DIM_NAMES.len() || v != DIM_NAMES[n] {
            let want = DIM_NAMES.get(n).copied().unwrap_or("<none>");
            return Err(invalid(
                span,
                format!("loop variables must be x, y, c in order; expected `{want}`, found `{v}`"),
            ));
        }
        n += 1;
        if c.eat(')') {
            return Ok(n);
        }
        c.expect(',')?;
    }
}

enum Decl<'a> {
    Input { name: String, span: Span, dims: usize, extent: Extent },
    Clamp { name: String, span: Span, input: (String, Span) },
    Func { name: String, span: Span, dims: usize, body: Cursor<'a> },
}

struct Scope<'a> {
    params: &'a HashMap<String, usize>,
    funcs: &'a HashMap<String, FuncId>,
    dims_of: &'a [usize],
    dims: usize,
}

fn parse_expr(c: &mut Cursor<'_>, s: &Scope<'_>) -> Result<Expr, ParseError> {
    let mut lhs = parse_term(c, s)?;
    loop {
        let op = match c.peek() {
            Some(Tok::Sym('+')) => BinOp::Add,
            Some(Tok::Sym('-')) => BinOp::Sub,
            _ => return Ok(lhs),
        };
        c.pos += 1;
        let rhs = parse_term(c, s)?;
        lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
    }
}

fn parse_term(c: &mut Cursor<'_>, s: &Scope<'_>) -> Result<Expr, ParseError> {
    let mut lhs = parse_unary(c, s)?;
    loop {
        let op = match c.peek() {
            Some(Tok::Sym('*')) => BinOp::Mul,
            Some(Tok::Sym('/')) => BinOp::Div,
            _ => return Ok(lhs),
        };
        c.pos += 1;
        let rhs = parse_unary(c, s)?;
        lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
    }
}

fn parse_unary(c: &mut Cursor<'_>, s: &Scope<'_>) -> Result<Expr, ParseError> {
    if c.eat('-') {
        let inner = parse_unary(c, s)?;
        return Ok(match inner {
            Expr::Lit(v) => Expr::Lit(-v),
            e => Expr::Neg(Box::new(e)),
        });
    }
    parse_primary(c, s)
}

fn parse_primary(c: &mut Cursor<'_>, s: &Scope<'_>) -> Result<Expr, ParseError> {
    let span = c.span();
    match c.next().map(|t| &t.tok) {
        Some(Tok::Num(v)) => Ok(Expr::Lit(*v)),
        Some(Tok::Sym('(')) => {
            let e = parse_expr(c, s)?;
            c.expect(')')?;
            Ok(e)
        }
        Some(Tok::Ident(name)) => {
            if c.peek() == Some(&Tok::Sym('(')) {
                c.pos += 1;
                let mut args = Vec::new();
                if !c.eat(')') {
                    loop {
                        let aspan = c.span();
                        args.push((parse_expr(c, s)?, aspan));
                        if c.eat(')') {
                            break;
                        }
                        c.expect(',')?;
                    }
                }
                let intrinsic = match name.as_str() {
                    "exp" => Some(Intrinsic::Exp),
                    "sqrt" => Some(Intrinsic::Sqrt),
                    _ => None,
                };
                if let Some(op) = intrinsic {
                    if args.len() != 1 {
                        return Err(ParseError::Arity { span, name: name.clone(), expected: 1, found: args.len() });
                    }
                    let (arg, _) = args.pop().unwrap();
                    return Ok(Expr::Call(op, Box::new(arg)));
                }
                let func =
                    *s.funcs.get(name).ok_or_else(|| ParseError::UnknownIdentifier { span, name: name.clone() })?;
                let expected = s.dims_of[func];
                if args.len() != expected {
                    return Err(ParseError::Arity { span, name: name.clone(), expected, found: args.len() });
                }
                let args = args
                    .into_iter()
                    .enumerate()
                    .map(|(pos, (e, aspan))| affine_index(&e, pos, aspan))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Expr::Access { func, args })
            } else if let Some(d) = DIM_NAMES[..s.dims].iter().position(|v| v == name) {
                Ok(Expr::Var(d))
            } else if let Some(&p) = s.params.get(name) {
                Ok(Expr::Param(p))
            } else if s.funcs.contains_key(name) {
                let f = s.funcs[name];
                Err(ParseError::Arity { span, name: name.clone(), expected: s.dims_of[f], found: 0 })
            } else {
                Err(ParseError::UnknownIdentifier { span, name: name.clone() })
            }
        }
        _ => Err(syntax(span, "expected expression")),
    }
}

fn int_lit(e: &Expr) -> Option<i64> {
    match e {
        Expr::Lit(v) if v.fract() == 0.0 && v.abs() < 1e15 => Some(*v as i64),
        _ => None,
    }
}

fn affine_index(e: &Expr, pos: usize, span: Span) -> Result<Index, ParseError> {
    let var_at = |d: usize, offset: i64| {
        if d == pos {
            Ok(Index::Var { dim: d, offset })
        } else {
            Err(ParseError::NonAffine {
                span,
                message: format!("argument {} must use `{}`, not `{}`", pos + 1, DIM_NAMES[pos], DIM_NAMES[d]),
            })
        }
    };
    if let Some(k) = int_lit(e) {
        return Ok(Index::Const(k));
    }
    match e {
        Expr::Var(d) => var_at(*d, 0),
        Expr::Binary(BinOp::Add, a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Var(d), k) if int_lit(k).is_some() => var_at(*d, int_lit(k).unwrap()),
            (k, Expr::Var(d)) if int_lit(k).is_some() => var_at(*d, int_lit(k).unwrap()),
            _ => Err(ParseError::NonAffine { span, message: "unsupported sum".into() }),
        },
        Expr::Binary(BinOp::Sub, a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Var(d), k) if int_lit(k).is_some() => var_at(*d, -int_lit(k).unwrap()),
            _ => Err(ParseError::NonAffine { span, message: "unsupported difference".into() }),
        },
        _ => Err(ParseError::NonAffine { span, message: "expected `var`, `var + k`, `var - k` or an integer".into() }),
    }
}

/// Parses and validates pipeline source text.
pub fn parse_pipeline(text: &str) -> Result<Pipeline, ParseError> {
    let stmts = split_statements(text)?;
    let mut name: Option<String> = None;
    let mut params: Vec<(String, f64)> = Vec::new();
    let mut param_ids: HashMap<String, usize> = HashMap::new();
    let mut decls: Vec<Decl<'_>> = Vec::new();
    let mut output: Option<(String, Span, Extent)> = None;

    for stmt in &stmts {
        let mut c = Cursor { toks: &stmt.tokens, pos: 0, end: stmt.end };
        let (kw, kspan) = c.ident()?;
        match kw.as_str() {
            "pipeline" => {
                if name.is_some() {
                    return Err(invalid(kspan, "duplicate `pipeline` line"));
                }
                name = Some(c.ident()?.0);
                c.done()?;
            }
            "param" => {
                let (p, pspan) = c.ident()?;
                c.expect('=')?;
                let neg = c.eat('-');
                let vspan = c.span();
                let v = match c.next() {
                    Some(Token { tok: Tok::Num(v), .. }) => *v,
                    _ => return Err(syntax(vspan, "expected number")),
                };
                c.done()?;
                if param_ids.contains_key(&p) {
                    return Err(invalid(pspan, format!("duplicate parameter `{p}`")));
                }
                param_ids.insert(p.clone(), params.len());
                params.push((p, if neg { -v } else { v }));
            }
            "input" => {
                let (n, span) = c.ident()?;
                let dims = parse_vars(&mut c)?;
                c.expect(':')?;
                let extent = parse_extent(&mut c)?;
                c.done()?;
                if extent.dims() != dims {
                    return Err(invalid(span, format!("input `{n}` has {dims} dimension(s) but extent {extent}")));
                }
                decls.push(Decl::Input { name: n, span, dims, extent });
            }
            "func" => {
                let (n, span) = c.ident()?;
                if c.eat('=') {
                    let (callee, cspan) = c.ident()?;
                    if callee != "clamp_edge" {
                        return Err(syntax(cspan, "a function without variables must be `clamp_edge(<input>)`"));
                    }
                    c.expect('(')?;
                    let input = c.ident()?;
                    c.expect(')')?;
                    c.done()?;
                    decls.push(Decl::Clamp { name: n, span, input });
                } else {
                    let dims = parse_vars(&mut c)?;
                    c.expect('=')?;
                    let body = Cursor { toks: &stmt.tokens[c.pos..], pos: 0, end: stmt.end };
                    decls.push(Decl::Func { name: n, span, dims, body });
                }
            }
            "output" => {
                let (n, span) = c.ident()?;
                c.expect(':')?;
                let extent = parse_extent(&mut c)?;
                c.done()?;
                if output.is_some() {
                    return Err(invalid(span, "a pipeline has exactly one output"));
                }
                output = Some((n, span, extent));
            }
            other => return Err(syntax(kspan, format!("unknown statement `{other}`"))),
        }
    }

    let start = Span { line: 1, col: 1 };
    let name = name.ok_or_else(|| syntax(start, "missing `pipeline <name>` line"))?;

    let mut func_ids: HashMap<String, FuncId> = HashMap::new();
    for (i, d) in decls.iter().enumerate() {
        let (n, span) = match d {
            Decl::Input { name, span, .. } | Decl::Clamp { name, span, .. } | Decl::Func { name, span, .. } => {
                (name, *span)
            }
        };
        if func_ids.insert(n.clone(), i).is_some() || param_ids.contains_key(n) {
            return Err(invalid(span, format!("duplicate name `{n}`")));
        }
        if DIM_NAMES.contains(&n.as_str()) || n == "exp" || n == "sqrt" || n == "clamp_edge" {
            return Err(invalid(span, format!("`{n}` is reserved")));
        }
    }

    // Clamp functions inherit the dimensionality of their input.
    let mut dims_of = Vec::with_capacity(decls.len());
    for d in &decls {
        dims_of.push(match d {
            Decl::Input { dims, .. } | Decl::Func { dims, .. } => *dims,
            Decl::Clamp { input: (iname, ispan), .. } => match func_ids.get(iname).map(|&i| &decls[i]) {
                Some(Decl::Input { dims, .. }) => *dims,
                Some(_) => return Err(invalid(*ispan, format!("clamp_edge expects an input, `{iname}` is not one"))),
                None => return Err(ParseError::UnknownIdentifier { span: *ispan, name: iname.clone() }),
            },
        });
    }

    let mut funcs = Vec::with_capacity(decls.len());
    let mut spans = Vec::with_capacity(decls.len());
    for (i, d) in decls.into_iter().enumerate() {
        match d {
            Decl::Input { name, span, dims, extent } => {
                spans.push(span);
                funcs.push(FuncDef { name, dims, kind: FuncKind::Input { extent } });
            }
            Decl::Clamp { name, span, input } => {
                spans.push(span);
                funcs.push(FuncDef { name, dims: dims_of[i], kind: FuncKind::ClampEdge { input: func_ids[&input.0] } });
            }
            Decl::Func { name, span, dims, mut body } => {
                let scope = Scope { params: &param_ids, funcs: &func_ids, dims_of: &dims_of, dims };
                let expr = parse_expr(&mut body, &scope)?;
                body.done()?;
                spans.push(span);
                funcs.push(FuncDef { name, dims, kind: FuncKind::Computed { expr } });
            }
        }
    }

    let (oname, ospan, oextent) = output.ok_or_else(|| syntax(start, "missing `output` line"))?;
    let out =
        *func_ids.get(&oname).ok_or_else(|| ParseError::UnknownIdentifier { span: ospan, name: oname.clone() })?;
    if funcs[out].expr().is_none() {
        return Err(invalid(ospan, format!("output `{oname}` must be a computed function")));
    }
    if oextent.dims() != funcs[out].dims {
        return Err(invalid(
            ospan,
            format!("output `{oname}` has {} dimension(s) but extent {oextent}", funcs[out].dims),
        ));
    }

    let pipeline = Pipeline::from_parts(name, params, funcs, out, oextent);
    check_acyclic(&pipeline, &spans)?;
    Ok(pipeline)
}

fn check_acyclic(p: &Pipeline, spans: &[Span]) -> Result<(), ParseError> {
    // 0 = unvisited, 1 = on stack, 2 = finished
    fn visit(p: &Pipeline, f: FuncId, state: &mut [u8], spans: &[Span]) -> Result<(), ParseError> {
        state[f] = 1;
        for &q in p.producers(f) {
            match state[q] {
                1 => return Err(ParseError::Cycle { span: spans[q], name: p.name_of(q).to_string() }),
                0 => visit(p, q, state, spans)?,
                _ => {}
            }
        }
        state[f] = 2;
        Ok(())
    }
    let mut state = vec![0u8; p.funcs.len()];
    for f in 0..p.funcs.len() {
        if state[f] == 0 {
            visit(p, f, &mut state, spans)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "pipeline t\ninput in(x, y) : 8x8\nfunc b = clamp_edge(in)\n";

    fn parse_with(body: &str) -> Result<Pipeline, ParseError> {
        parse_pipeline(&format!("{HEAD}{body}"))
    }

    #[test]
    fn self_cycle_is_rejected() {
        let err = parse_with("func f(x, y) = f(x - 1, y)\noutput f : 8x8\n").unwrap_err();
        assert!(matches!(err, ParseError::Cycle { ref name, .. } if name == "f"), "{err}");
    }

    #[test]
    fn two_cycle_is_rejected() {
        let err = parse_with("func f(x, y) = g(x, y)\nfunc g(x, y) = f(x, y) + b(x, y)\noutput g : 8x8\n").unwrap_err();
        assert!(matches!(err, ParseError::Cycle { .. }));
    }

    #[test]
    fn unknown_identifier_has_span() {
        let err = parse_with("func f(x, y) = b(x, y) * gain\noutput f : 8x8\n").unwrap_err();
        assert_eq!(err, ParseError::UnknownIdentifier { span: Span { line: 4, col: 26 }, name: "gain".into() });
    }

    #[test]
    fn arity_mismatch() {
        let err = parse_with("func f(x, y) = b(x)\noutput f : 8x8\n").unwrap_err();
        assert!(matches!(err, ParseError::Arity { expected: 2, found: 1, .. }));
    }

    #[test]
    fn non_affine_access() {
        for body in ["b(x * 2, y)", "b(y, x)", "b(x + y, y)", "b(x + 0.5, y)"] {
            let err = parse_with(&format!("func f(x, y) = {body}\noutput f : 8x8\n")).unwrap_err();
            assert!(matches!(err, ParseError::NonAffine { .. }), "{body}: {err}");
        }
    }

    #[test]
    fn affine_forms_accepted() {
        let p = parse_with("func f(x, y) = b(x - 2, 3 + y) + b(1, y) + b(x, -1)\noutput f : 8x8\n").unwrap();
        let mut idx = Vec::new();
        p.func(p.output).expr().unwrap().for_each_access(&mut |_, a| idx.push(a.to_vec()));
        assert_eq!(
            idx,
            vec![
                vec![Index::Var { dim: 0, offset: -2 }, Index::Var { dim: 1, offset: 3 }],
                vec![Index::Const(1), Index::Var { dim: 1, offset: 0 }],
                vec![Index::Var { dim: 0, offset: 0 }, Index::Const(-1)],
            ]
        );
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_with("func f(x, y) = b(x, y) +\noutput f : 8x8\n").unwrap_err();
        match err {
            ParseError::Syntax { span, .. } => assert_eq!(span.line, 4),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn continuation_lines_join() {
        let p = parse_with("func f(x, y) = b(x, y) +\n    b(x + 1, y)\noutput f : 8x8\n").unwrap();
        assert_eq!(p.ops_per_point(p.output), 1);
    }

    #[test]
    fn output_extent_must_match_dims() {
        assert!(parse_with("func f(x, y) = b(x, y)\noutput f : 8x8x3\n").is_err());
        assert!(parse_with("func f(x, y) = b(x, y)\n").is_err());
    }

    #[test]
    fn variables_must_be_canonical() {
        assert!(parse_with("func f(y, x) = b(x, y)\noutput f : 8x8\n").is_err());
        assert!(parse_with("func f(x, y) = b(x, c)\noutput f : 8x8\n").is_err());
    }
}
