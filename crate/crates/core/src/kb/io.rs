//! Tab-separated triple and label files.
//!
//! Triples: `s<TAB>p<TAB>o<TAB>kind`, kind ∈ {entity, literal}. The object is
//! everything between the second tab and the last tab, so literals may carry
//! tabs. Labels and anchors: `entity<TAB>text`. Blank lines are skipped.

use std::io::{BufRead, Write};

use super::{KbBuilder, KnowledgeBase, Term, Triple, RDFS_SUBCLASS_OF, RDF_TYPE};
use crate::error::{Error, Result};

fn parse_triple(line: &str, source: &str, lineno: usize) -> Result<Triple> {
    let mut head = line.splitn(3, '\t');
    let (s, p, rest) = match (head.next(), head.next(), head.next()) {
        (Some(s), Some(p), Some(rest)) => (s, p, rest),
        _ => return Err(Error::parse(source, lineno, "expected 4 tab-separated fields")),
    };
    let (o, kind) = rest
        .rsplit_once('\t')
        .ok_or_else(|| Error::parse(source, lineno, "expected 4 tab-separated fields"))?;
    if s.is_empty() || p.is_empty() {
        return Err(Error::parse(source, lineno, "empty subject or property"));
    }
    let o = match kind.trim() {
        "entity" if o.is_empty() => {
            return Err(Error::parse(source, lineno, "empty entity object"))
        }
        "entity" => Term::Entity(o.to_string()),
        "literal" => Term::Literal(o.to_string()),
        other => {
            return Err(Error::parse(
                source,
                lineno,
                format!("unknown object kind `{other}`"),
            ))
        }
    };
    Ok(Triple::new(s, p, o))
}

/// Reads a triple file into `builder`. Returns the number of lines read.
pub fn load_triples<R: BufRead>(reader: R, source: &str, builder: &mut KbBuilder) -> Result<usize> {
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        builder.add_triple(parse_triple(line, source, i + 1)?);
        n += 1;
    }
    Ok(n)
}

fn load_pairs<R: BufRead>(
    reader: R,
    source: &str,
    mut each: impl FnMut(&str, &str),
) -> Result<usize> {
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (entity, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, i + 1, "expected `entity<TAB>text`"))?;
        if entity.is_empty() {
            return Err(Error::parse(source, i + 1, "empty entity id"));
        }
        each(entity, text);
        n += 1;
    }
    Ok(n)
}

pub fn load_labels<R: BufRead>(reader: R, source: &str, builder: &mut KbBuilder) -> Result<usize> {
    load_pairs(reader, source, |e, l| {
        builder.add_label(e, l);
    })
}

pub fn load_anchors<R: BufRead>(reader: R, source: &str, builder: &mut KbBuilder) -> Result<usize> {
    load_pairs(reader, source, |e, t| {
        builder.add_anchor(e, t);
    })
}

pub fn write_triples<'a, W: Write>(
    mut w: W,
    triples: impl IntoIterator<Item = &'a Triple>,
) -> std::io::Result<()> {
    for t in triples {
        writeln!(w, "{}\t{}\t{}\t{}", t.s, t.p, t.o.value(), t.o.kind_name())?;
    }
    Ok(())
}

/// Property assertions, then class assertions, then subclass edges.
pub fn write_kb<W: Write>(mut w: W, kb: &KnowledgeBase) -> std::io::Result<()> {
    write_triples(&mut w, kb.triples())?;
    for (e, classes) in kb.declared_types() {
        for c in classes {
            writeln!(w, "{e}\t{RDF_TYPE}\t{c}\tentity")?;
        }
    }
    for (sub, sups) in kb.subclass_edges() {
        for sup in sups {
            writeln!(w, "{sub}\t{RDFS_SUBCLASS_OF}\t{sup}\tentity")?;
        }
    }
    Ok(())
}

pub fn write_labels<W: Write>(mut w: W, kb: &KnowledgeBase) -> std::io::Result<()> {
    for (e, labels) in kb.all_labels() {
        for l in labels {
            writeln!(w, "{e}\t{l}")?;
        }
    }
    Ok(())
}

impl KnowledgeBase {
    /// Loads triples, labels, and an optional schema file (subclass edges in
    /// triple format) into a validated store.
    pub fn load<T: BufRead, L: BufRead, S: BufRead>(
        triples: T,
        labels: Option<L>,
        schema: Option<S>,
    ) -> Result<KnowledgeBase> {
        let mut b = KbBuilder::new();
        load_triples(triples, "triples", &mut b)?;
        if let Some(l) = labels {
            load_labels(l, "labels", &mut b)?;
        }
        if let Some(s) = schema {
            load_triples(s, "schema", &mut b)?;
        }
        b.build()
    }

    /// File-based loader; missing optional paths are skipped.
    pub fn load_files(
        triples: &std::path::Path,
        labels: Option<&std::path::Path>,
        schema: Option<&std::path::Path>,
        anchors: Option<&std::path::Path>,
    ) -> Result<KnowledgeBase> {
        let open = |p: &std::path::Path| -> Result<std::io::BufReader<std::fs::File>> {
            std::fs::File::open(p)
                .map(std::io::BufReader::new)
                .map_err(|e| Error::io(p, e))
        };
        let name = |p: &std::path::Path| p.display().to_string();
        let mut b = KbBuilder::new();
        load_triples(open(triples)?, &name(triples), &mut b)?;
        if let Some(p) = schema {
            load_triples(open(p)?, &name(p), &mut b)?;
        }
        if let Some(p) = labels {
            load_labels(open(p)?, &name(p), &mut b)?;
        }
        if let Some(p) = anchors {
            load_anchors(open(p)?, &name(p), &mut b)?;
        }
        b.build()
    }
}
