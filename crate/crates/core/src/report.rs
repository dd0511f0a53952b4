//! CSV output shared by the experiment drivers.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Write `rows` under a header, preceded by a `# comment` line.
///
/// The file is written to a sibling temporary file and renamed into place, so
/// readers never observe a partial table. Floats use Rust's shortest
/// round-trip formatting, which makes equal inputs give identical bytes.
pub fn write_csv(path: &Path, comment: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut buf = Vec::new();
    for line in comment.lines() {
        writeln!(buf, "# {line}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comment_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(
            &path,
            "{\"p\":2}",
            &["a", "b"],
            &[vec![1.0, 0.1], vec![-2.5, 1e-20]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "# {\"p\":2}\na,b\n1,0.1\n-2.5,0.00000000000000000001\n"
        );
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn unwritable_path() {
        let r = write_csv(Path::new("/nonexistent-dir/x.csv"), "", &["a"], &[]);
        assert!(matches!(r, Err(crate::Error::Io(_))));
    }
}
