//! Function-call extraction from Python code cells.
//!
//! This is a tokenizer-level scanner rather than a parser: string literals and
//! comments are masked out, physical lines are grouped into logical lines by
//! bracket depth, and every `name(` / `a.b.c(` occurrence becomes a call.
//! Calls are emitted when their closing parenthesis is reached, which yields
//! innermost-first order for nested arguments and receiver-first order for
//! chained method calls.
//!
//! Top-level `def` blocks emit nothing where they are written; their bodies are
//! spliced in at each call site instead (one level deep).

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::notebook::{Cell, Notebook};

const NON_CALL_KEYWORDS: &[&str] = &[
    "if", "elif", "while", "for", "in", "and", "or", "not", "is", "return", "yield", "assert",
    "with", "as", "except", "del", "global", "nonlocal", "import", "from", "lambda", "else", "try",
    "finally", "pass", "raise", "await", "async", "class", "def", "case", "match",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallOrigin {
    Direct,
    /// Spliced in from the body of a notebook-defined function.
    Spliced {
        definition: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallEvent {
    pub qualified_name: String,
    pub cell_index: usize,
    pub line_index: usize,
    pub nesting_depth: usize,
    pub seq: usize,
    pub origin: CallOrigin,
}

/// Local alias → canonical module or function path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMap {
    entries: BTreeMap<String, String>,
}

impl AliasMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alias: impl Into<String>, canonical: impl Into<String>) {
        self.entries.insert(alias.into(), canonical.into());
    }

    pub fn get(&self, alias: &str) -> Option<&str> {
        self.entries.get(alias).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Rewrites the leading segment of a dotted name through the map.
    ///
    /// A leading segment that is itself the head of some canonical name is
    /// left alone, so resolving is idempotent.
    pub fn resolve(&self, dotted: &str) -> String {
        let (head, rest) = match dotted.find('.') {
            Some(i) => (&dotted[..i], &dotted[i..]),
            None => (dotted, ""),
        };
        let is_canonical_head = self
            .entries
            .values()
            .any(|v| v.split('.').next() == Some(head));
        if is_canonical_head {
            return dotted.to_string();
        }
        match self.entries.get(head) {
            Some(canonical) => format!("{canonical}{rest}"),
            None => dotted.to_string(),
        }
    }
}

/// Locally-defined function name → body call events (unexpanded).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefinitionTable {
    entries: BTreeMap<String, Vec<CallEvent>>,
}

impl DefinitionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, body: Vec<CallEvent>) {
        self.entries.insert(name.into(), body);
    }

    pub fn get(&self, name: &str) -> Option<&[CallEvent]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// One import statement with the bindings it introduces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportStatement {
    pub first_line: usize,
    pub last_line: usize,
    pub bindings: Vec<(String, String)>,
}

/// An import or a call, in source order within a cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellItem {
    Import(ImportStatement),
    Call(CallEvent),
}

pub fn resolve_aliases(notebook: &Notebook) -> AliasMap {
    let mut map = AliasMap::new();
    for cell in notebook.code_cells() {
        let scanned = ScannedCell::new(&cell.source);
        for logical in &scanned.logical {
            for stmt in scanned.statements(logical.range.clone()) {
                if let Some(import) = parse_import(&stmt.text) {
                    for (alias, canonical) in import {
                        map.insert(alias, canonical);
                    }
                }
            }
        }
    }
    map
}

pub fn collect_definitions(notebook: &Notebook, aliases: &AliasMap) -> DefinitionTable {
    let mut table = DefinitionTable::new();
    for cell in notebook.code_cells() {
        let scanned = ScannedCell::new(&cell.source);
        for def in scanned.top_level_defs() {
            let mut body = Vec::new();
            for logical in &scanned.logical {
                let Some(range) = intersect(&logical.range, &def.body) else {
                    continue;
                };
                if let Some(calls) = scanned.scan_calls(range) {
                    for call in calls {
                        body.push(CallEvent {
                            qualified_name: aliases.resolve(&call.name),
                            cell_index: cell.index,
                            line_index: call.line,
                            nesting_depth: call.depth,
                            seq: body.len(),
                            origin: CallOrigin::Direct,
                        });
                    }
                }
            }
            table.insert(def.name, body);
        }
    }
    table
}

pub fn extract_calls(cell: &Cell, aliases: &AliasMap, defs: &DefinitionTable) -> Vec<CallEvent> {
    extract_items(cell, aliases, defs)
        .into_iter()
        .filter_map(|item| match item {
            CellItem::Call(ev) => Some(ev),
            CellItem::Import(_) => None,
        })
        .collect()
}

/// Imports and calls of one code cell in emission order. `seq` restarts at 0
/// for each cell.
pub fn extract_items(cell: &Cell, aliases: &AliasMap, defs: &DefinitionTable) -> Vec<CellItem> {
    if !cell.is_code() {
        return Vec::new();
    }
    let scanned = ScannedCell::new(&cell.source);
    let def_blocks: Vec<Range<usize>> = scanned
        .top_level_defs()
        .into_iter()
        .map(|d| d.block)
        .collect();
    let mut items = Vec::new();
    let mut seq = 0;

    for logical in &scanned.logical {
        if def_blocks
            .iter()
            .any(|b| b.start <= logical.range.start && logical.range.start < b.end)
        {
            continue;
        }
        for stmt in scanned.statements(logical.range.clone()) {
            if let Some(bindings) = parse_import(&stmt.text) {
                items.push(CellItem::Import(ImportStatement {
                    first_line: scanned.line_of(stmt.range.start),
                    last_line: scanned
                        .line_of(stmt.range.end.saturating_sub(1).max(stmt.range.start)),
                    bindings,
                }));
                continue;
            }
            let Some(calls) = scanned.scan_calls(stmt.range.clone()) else {
                continue;
            };
            for call in calls {
                let splice = (!call.name.contains('.') && !call.on_expression)
                    .then(|| defs.get(&call.name))
                    .flatten();
                match splice {
                    Some(body) => {
                        for ev in body {
                            items.push(CellItem::Call(CallEvent {
                                qualified_name: ev.qualified_name.clone(),
                                cell_index: cell.index,
                                line_index: call.line,
                                nesting_depth: call.depth + ev.nesting_depth,
                                seq,
                                origin: CallOrigin::Spliced {
                                    definition: call.name.clone(),
                                },
                            }));
                            seq += 1;
                        }
                    }
                    None => {
                        items.push(CellItem::Call(CallEvent {
                            qualified_name: aliases.resolve(&call.name),
                            cell_index: cell.index,
                            line_index: call.line,
                            nesting_depth: call.depth,
                            seq,
                            origin: CallOrigin::Direct,
                        }));
                        seq += 1;
                    }
                }
            }
        }
    }
    items
}

fn intersect(a: &Range<usize>, b: &Range<usize>) -> Option<Range<usize>> {
    let start = a.start.max(b.start);
    let end = a.end.min(b.end);
    (start < end).then_some(start..end)
}

#[derive(Debug)]
struct RawCall {
    name: String,
    on_expression: bool,
    line: usize,
    depth: usize,
}

#[derive(Debug)]
struct LogicalLine {
    range: Range<usize>,
}

#[derive(Debug)]
struct Statement {
    range: Range<usize>,
    text: String,
}

#[derive(Debug)]
struct TopLevelDef {
    name: String,
    block: Range<usize>,
    body: Range<usize>,
}

/// A cell's source with strings and comments blanked out.
struct ScannedCell {
    masked: Vec<char>,
    line_starts: Vec<usize>,
    bad_lines: BTreeSet<usize>,
    logical: Vec<LogicalLine>,
}

impl ScannedCell {
    fn new(source: &str) -> Self {
        let chars: Vec<char> = source.chars().collect();
        let mut line_starts = vec![0];
        for (i, c) in chars.iter().enumerate() {
            if *c == '\n' {
                line_starts.push(i + 1);
            }
        }
        let (masked, bad_lines) = mask(&chars, &line_starts);
        let mut scanned = Self {
            masked,
            line_starts,
            bad_lines,
            logical: Vec::new(),
        };
        scanned.logical = scanned.split_logical();
        scanned
    }

    fn line_of(&self, pos: usize) -> usize {
        match self.line_starts.binary_search(&pos) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    fn line_range(&self, line: usize) -> Range<usize> {
        let start = self.line_starts[line];
        let end = self
            .line_starts
            .get(line + 1)
            .map_or(self.masked.len(), |next| next - 1);
        start..end
    }

    fn line_text(&self, line: usize) -> String {
        self.masked[self.line_range(line)].iter().collect()
    }

    fn split_logical(&self) -> Vec<LogicalLine> {
        let mut out = Vec::new();
        let mut depth: i64 = 0;
        let mut start = 0;
        let mut last_non_space: Option<char> = None;
        for (i, &c) in self.masked.iter().enumerate() {
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                _ => {}
            }
            if c == '\n' {
                let bad_line = self.bad_lines.contains(&self.line_of(i));
                if bad_line || (depth <= 0 && last_non_space != Some('\\')) {
                    if self.masked[start..i].iter().any(|c| !c.is_whitespace()) {
                        out.push(LogicalLine { range: start..i });
                    }
                    start = i + 1;
                    depth = 0;
                }
            } else if !c.is_whitespace() {
                last_non_space = Some(c);
            }
        }
        if self.masked[start..].iter().any(|c| !c.is_whitespace()) {
            out.push(LogicalLine {
                range: start..self.masked.len(),
            });
        }
        out
    }

    /// Splits a logical line on top-level `;`.
    fn statements(&self, range: Range<usize>) -> Vec<Statement> {
        let mut out = Vec::new();
        let mut depth = 0i64;
        let mut start = range.start;
        for i in range.clone() {
            match self.masked[i] {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => depth -= 1,
                ';' if depth == 0 => {
                    out.push(self.statement(start..i));
                    start = i + 1;
                }
                _ => {}
            }
        }
        out.push(self.statement(start..range.end));
        out.retain(|s| !s.text.trim().is_empty());
        out
    }

    fn statement(&self, range: Range<usize>) -> Statement {
        let text = self.masked[range.clone()]
            .iter()
            .map(|&c| if c == '\\' || c == '\n' { ' ' } else { c })
            .collect();
        Statement { range, text }
    }

    fn top_level_defs(&self) -> Vec<TopLevelDef> {
        let mut defs = Vec::new();
        for logical in &self.logical {
            let header_line = self.line_of(logical.range.start);
            if self.line_starts[header_line] != logical.range.start {
                continue;
            }
            let text: String = self.masked[logical.range.clone()].iter().collect();
            let rest = text
                .strip_prefix("def ")
                .or_else(|| text.strip_prefix("async def "));
            let Some(rest) = rest else { continue };
            let name: String = rest
                .trim_start()
                .chars()
                .take_while(|c| c.is_alphanumeric() || *c == '_')
                .collect();
            if name.is_empty() {
                continue;
            }
            let Some(colon) = self.signature_colon(logical.range.clone()) else {
                continue;
            };

            // body continues over blank and indented lines
            let mut end = logical.range.end;
            let mut line = self.line_of(logical.range.end.saturating_sub(1)) + 1;
            while line < self.line_starts.len() {
                let lt = self.line_text(line);
                if !lt.trim().is_empty() && !lt.starts_with(char::is_whitespace) {
                    break;
                }
                end = self.line_range(line).end;
                line += 1;
            }
            defs.push(TopLevelDef {
                name,
                block: logical.range.start..end.max(logical.range.end),
                body: colon + 1..end.max(logical.range.end),
            });
        }
        defs
    }

    /// Position of the `:` that ends a `def` header.
    fn signature_colon(&self, range: Range<usize>) -> Option<usize> {
        let mut depth = 0i64;
        let mut seen_params = false;
        for i in range {
            match self.masked[i] {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => {
                    depth -= 1;
                    if depth == 0 {
                        seen_params = true;
                    }
                }
                ':' if depth == 0 && seen_params => return Some(i),
                _ => {}
            }
        }
        None
    }

    /// Calls within `range` in closing-parenthesis order, or `None` if the
    /// brackets do not balance or a line in range failed to tokenize.
    fn scan_calls(&self, range: Range<usize>) -> Option<Vec<RawCall>> {
        let first_line = self.line_of(range.start);
        let last_line = self.line_of(range.end.saturating_sub(1).max(range.start));
        if (first_line..=last_line).any(|l| self.bad_lines.contains(&l)) {
            return None;
        }

        struct Frame {
            close: char,
            call: Option<(String, bool, usize)>,
        }
        let mut stack: Vec<Frame> = Vec::new();
        let mut calls = Vec::new();
        for i in range.clone() {
            let c = self.masked[i];
            match c {
                '(' => {
                    let call = self.call_name_before(range.start, i);
                    stack.push(Frame { close: ')', call });
                }
                '[' => stack.push(Frame {
                    close: ']',
                    call: None,
                }),
                '{' => stack.push(Frame {
                    close: '}',
                    call: None,
                }),
                ')' | ']' | '}' => {
                    let frame = stack.pop()?;
                    if frame.close != c {
                        return None;
                    }
                    if let Some((name, on_expression, pos)) = frame.call {
                        let depth = stack.iter().filter(|f| f.call.is_some()).count();
                        calls.push(RawCall {
                            name,
                            on_expression,
                            line: self.line_of(pos),
                            depth,
                        });
                    }
                }
                _ => {}
            }
        }
        stack.is_empty().then_some(calls)
    }

    /// Reads the dotted name directly before an opening parenthesis.
    fn call_name_before(&self, floor: usize, paren: usize) -> Option<(String, bool, usize)> {
        let mut end = paren;
        while end > floor && matches!(self.masked[end - 1], ' ' | '\t') {
            end -= 1;
        }
        let mut start = end;
        while start > floor {
            let c = self.masked[start - 1];
            if c.is_alphanumeric() || c == '_' || c == '.' {
                start -= 1;
            } else {
                break;
            }
        }
        if start == end {
            return None;
        }
        let chain: String = self.masked[start..end].iter().collect();
        let on_expression = chain.starts_with('.');
        let name = chain.trim_start_matches('.');
        if name.is_empty() || name.ends_with('.') || name.contains("..") {
            return None;
        }
        let first = name.chars().next()?;
        if first.is_ascii_digit() {
            return None;
        }
        if !on_expression && NON_CALL_KEYWORDS.contains(&name) {
            return None;
        }
        // `def name(` and `class Name(` are not calls
        let mut p = start;
        while p > floor && matches!(self.masked[p - 1], ' ' | '\t') {
            p -= 1;
        }
        let word_end = p;
        while p > floor && (self.masked[p - 1].is_alphanumeric() || self.masked[p - 1] == '_') {
            p -= 1;
        }
        let prev_word: String = self.masked[p..word_end].iter().collect();
        if word_end < start && (prev_word == "def" || prev_word == "class") {
            return None;
        }
        Some((name.to_string(), on_expression, start))
    }
}

/// Blanks out string literals, comments and IPython magic/shell lines.
/// Returns the masked text and the lines holding an unterminated one-line
/// string.
fn mask(chars: &[char], line_starts: &[usize]) -> (Vec<char>, BTreeSet<usize>) {
    let mut out = chars.to_vec();
    let mut bad = BTreeSet::new();
    let blank = |out: &mut Vec<char>, i: usize| {
        if out[i] != '\n' {
            out[i] = ' ';
        }
    };

    // magics and shell escapes
    for &start in line_starts {
        let mut j = start;
        while j < chars.len() && matches!(chars[j], ' ' | '\t') {
            j += 1;
        }
        if j < chars.len() && matches!(chars[j], '%' | '!') {
            let mut k = j;
            while k < chars.len() && chars[k] != '\n' {
                out[k] = ' ';
                k += 1;
            }
        }
    }

    let line_of = |pos: usize| match line_starts.binary_search(&pos) {
        Ok(i) => i,
        Err(i) => i - 1,
    };

    let mut i = 0;
    while i < chars.len() {
        if out[i] == ' ' && chars[i] != ' ' {
            // already blanked as a magic line
            i += 1;
            continue;
        }
        match chars[i] {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    blank(&mut out, i);
                    i += 1;
                }
            }
            q @ ('\'' | '"') => {
                let triple = i + 2 < chars.len() && chars[i + 1] == q && chars[i + 2] == q;
                let open_len = if triple { 3 } else { 1 };
                let start = i;
                for k in 0..open_len {
                    blank(&mut out, i + k);
                }
                i += open_len;
                let mut closed = false;
                while i < chars.len() {
                    let c = chars[i];
                    if c == '\\' {
                        blank(&mut out, i);
                        if i + 1 < chars.len() {
                            blank(&mut out, i + 1);
                        }
                        i += 2;
                        continue;
                    }
                    if !triple && c == '\n' {
                        break;
                    }
                    if c == q
                        && (!triple
                            || (i + 2 < chars.len() && chars[i + 1] == q && chars[i + 2] == q))
                    {
                        for k in 0..open_len {
                            blank(&mut out, i + k);
                        }
                        i += open_len;
                        closed = true;
                        break;
                    }
                    blank(&mut out, i);
                    i += 1;
                }
                if !closed && !triple {
                    bad.insert(line_of(start));
                }
            }
            _ => i += 1,
        }
    }
    (out, bad)
}

/// Parses `import a.b as c, d` and `from x import (y as z, w)`.
fn parse_import(stmt: &str) -> Option<Vec<(String, String)>> {
    let s = stmt.trim();
    let is_ident = |p: &str| {
        !p.is_empty()
            && p.split('.').all(|seg| {
                !seg.is_empty()
                    && !seg.starts_with(|c: char| c.is_ascii_digit())
                    && seg.chars().all(|c| c.is_alphanumeric() || c == '_')
            })
    };
    if let Some(rest) = s.strip_prefix("import ") {
        let mut out = Vec::new();
        for part in rest.split(',') {
            let words: Vec<&str> = part.split_whitespace().collect();
            match words.as_slice() {
                [module] if is_ident(module) => {
                    let head = module.split('.').next().unwrap_or(module);
                    out.push((head.to_string(), head.to_string()));
                }
                [module, "as", alias] if is_ident(module) && is_ident(alias) => {
                    out.push((alias.to_string(), module.to_string()));
                }
                _ => return None,
            }
        }
        return (!out.is_empty()).then_some(out);
    }
    if let Some(rest) = s.strip_prefix("from ") {
        let (module, names) = rest.split_once(" import ")?;
        let module = module.trim();
        if module.starts_with('.') {
            // relative imports name notebook-local modules; nothing to resolve
            return Some(Vec::new());
        }
        if !is_ident(module) {
            return None;
        }
        let names = names.trim().trim_start_matches('(').trim_end_matches(')');
        let mut out = Vec::new();
        for part in names.split(',') {
            let words: Vec<&str> = part.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                ["*"] => {}
                [name] if is_ident(name) => {
                    out.push((name.to_string(), format!("{module}.{name}")))
                }
                [name, "as", alias] if is_ident(name) && is_ident(alias) => {
                    out.push((alias.to_string(), format!("{module}.{name}")))
                }
                _ => return None,
            }
        }
        return Some(out);
    }
    None
}
