use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::corpus::Corpus;

/// One parsed row of an exported vectors file.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorRow {
    pub id: usize,
    pub label: String,
    pub cluster: usize,
    pub vector: Vec<f64>,
}

/// Writes `id, label, cluster, x_0 .. x_{p-1}` as tab-separated rows under
/// a header line. Floats use the shortest text that parses back exactly.
pub fn write_vectors<W: Write>(out: W, corpus: &Corpus, assignments: &[usize], vectors: &Array2<f64>) -> Result<()> {
    if assignments.len() != corpus.len() || vectors.nrows() != corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "{} documents, {} assignments, {} vectors",
            corpus.len(),
            assignments.len(),
            vectors.nrows()
        )));
    }
    let mut out = BufWriter::new(out);
    let mut header = vec!["id".to_string(), "label".into(), "cluster".into()];
    header.extend((0..vectors.ncols()).map(|i| format!("x{i}")));
    writeln!(out, "{}", header.join("\t"))?;
    for ((doc, &cluster), row) in corpus.documents.iter().zip(assignments).zip(vectors.rows()) {
        let label = doc.label.map(|y| corpus.label_names[y].as_str()).unwrap_or("");
        write!(out, "{}\t{}\t{}", doc.id, label, cluster)?;
        for v in row {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_vectors(path: impl AsRef<Path>, corpus: &Corpus, assignments: &[usize], vectors: &Array2<f64>) -> Result<()> {
    write_vectors(File::create(path)?, corpus, assignments, vectors)
}

/// Reads a file written by [`export_vectors`].
pub fn read_vectors(path: impl AsRef<Path>) -> Result<Vec<VectorRow>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 {
            if fields.get(..3) != Some(&["id", "label", "cluster"][..]) {
                return Err(bad("missing `id label cluster` header".into()));
            }
            width = Some(fields.len());
            continue;
        }
        if Some(fields.len()) != width {
            return Err(bad(format!("expected {} columns, found {}", width.unwrap_or(0), fields.len())));
        }
        let id = fields[0].parse().map_err(|_| bad("bad id".into()))?;
        let cluster = fields[2].parse().map_err(|_| bad("bad cluster".into()))?;
        let vector = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad value {f:?}"))))
            .collect::<Result<_>>()?;
        rows.push(VectorRow {
            id,
            label: fields[1].to_string(),
            cluster,
            vector,
        });
    }
    if width.is_none() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "empty file".into(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus::CorpusFormat;

    #[test]
    fn two_documents_round_trip() {
        let corpus = Corpus::parse("A\tfirst one\nB\tsecond\n", CorpusFormat::Tsv, "m").unwrap();
        let x = ndarray::array![[0.1, -2.5e-17, 1.0 / 3.0], [f64::MAX, 7.0, -0.0]];
        let file = tempfile::NamedTempFile::new().unwrap();
        export_vectors(file.path(), &corpus, &[1, 0], &x).unwrap();
        let text = std::fs::read_to_string(file.path()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("id\tlabel\tcluster\tx0\tx1\tx2\n"));
        let rows = read_vectors(file.path()).unwrap();
        assert_eq!(rows[0].label, "A");
        assert_eq!(rows[1].cluster, 0);
        for (row, orig) in rows.iter().zip(x.rows()) {
            assert_eq!(row.vector, orig.to_vec());
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let corpus = Corpus::parse("A\tone\n", CorpusFormat::Tsv, "m").unwrap();
        let x = ndarray::array![[0.0]];
        assert!(write_vectors(Vec::new(), &corpus, &[0, 1], &x).is_err());
    }
}
