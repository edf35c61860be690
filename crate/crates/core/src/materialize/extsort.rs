//! Sorted runs on disk: in-memory sort with spilling, and k-way merging with
//! duplicate elimination.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

/// A sorted, duplicate-free stretch of lines inside a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub offset: u64,
    pub bytes: u64,
    pub lines: u64,
}

/// Writes `lines` (already sorted and deduplicated) to `out`.
fn write_lines(lines: &[String], out: &mut impl Write) -> io::Result<u64> {
    let mut bytes = 0;
    for l in lines {
        out.write_all(l.as_bytes())?;
        out.write_all(b"\n")?;
        bytes += l.len() as u64 + 1;
    }
    Ok(bytes)
}

/// Collects lines, spilling sorted chunks to temporary files once `threshold`
/// lines are buffered.
pub struct Spiller {
    threshold: usize,
    chunk: Vec<String>,
    spills: Vec<(tempfile::NamedTempFile, Run)>,
    tmp_dir: PathBuf,
}

impl Spiller {
    pub fn new(threshold: usize, tmp_dir: &Path) -> Spiller {
        Spiller {
            threshold: threshold.max(1),
            chunk: Vec::new(),
            spills: Vec::new(),
            tmp_dir: tmp_dir.to_path_buf(),
        }
    }

    pub fn push(&mut self, line: String) -> io::Result<()> {
        self.chunk.push(line);
        if self.chunk.len() >= self.threshold {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> io::Result<()> {
        self.chunk.sort_unstable();
        self.chunk.dedup();
        std::fs::create_dir_all(&self.tmp_dir)?;
        let mut file = tempfile::NamedTempFile::new_in(&self.tmp_dir)?;
        let bytes = {
            let mut w = BufWriter::new(file.as_file_mut());
            let b = write_lines(&self.chunk, &mut w)?;
            w.flush()?;
            b
        };
        let run = Run {
            offset: 0,
            bytes,
            lines: self.chunk.len() as u64,
        };
        self.chunk.clear();
        self.spills.push((file, run));
        Ok(())
    }

    pub fn spilled(&self) -> usize {
        self.spills.len()
    }

    /// Writes everything pushed so far to `out` as one sorted, deduplicated run.
    pub fn finish(mut self, out: &Path) -> io::Result<Run> {
        if self.spills.is_empty() {
            self.chunk.sort_unstable();
            self.chunk.dedup();
            let mut w = BufWriter::new(File::create(out)?);
            let bytes = write_lines(&self.chunk, &mut w)?;
            w.flush()?;
            return Ok(Run {
                offset: 0,
                bytes,
                lines: self.chunk.len() as u64,
            });
        }
        if !self.chunk.is_empty() {
            self.spill()?;
        }
        let inputs: Vec<(PathBuf, Run)> = self.spills.iter().map(|(f, r)| (f.path().to_path_buf(), *r)).collect();
        merge_runs(&inputs, out)
    }
}

struct RunReader {
    lines: io::Lines<BufReader<io::Take<File>>>,
}

impl RunReader {
    fn open(path: &Path, run: Run) -> io::Result<RunReader> {
        let mut f = File::open(path)?;
        f.seek(SeekFrom::Start(run.offset))?;
        Ok(RunReader {
            lines: BufReader::new(f.take(run.bytes)).lines(),
        })
    }

    fn next(&mut self) -> io::Result<Option<String>> {
        self.lines.next().transpose()
    }
}

/// Merges sorted runs into `out`, dropping duplicates across runs.
pub fn merge_runs(inputs: &[(PathBuf, Run)], out: &Path) -> io::Result<Run> {
    let mut readers = Vec::with_capacity(inputs.len());
    let mut heap = BinaryHeap::new();
    for (i, (path, run)) in inputs.iter().enumerate() {
        let mut r = RunReader::open(path, *run)?;
        if let Some(l) = r.next()? {
            heap.push(Reverse((l, i)));
        }
        readers.push(r);
    }
    let mut w = BufWriter::new(File::create(out)?);
    let mut last: Option<String> = None;
    let (mut bytes, mut lines) = (0u64, 0u64);
    while let Some(Reverse((line, i))) = heap.pop() {
        if let Some(next) = readers[i].next()? {
            heap.push(Reverse((next, i)));
        }
        if last.as_deref() == Some(line.as_str()) {
            continue;
        }
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
        bytes += line.len() as u64 + 1;
        lines += 1;
        last = Some(line);
    }
    w.flush()?;
    Ok(Run {
        offset: 0,
        bytes,
        lines,
    })
}

/// Reads every line of the given runs, in file order.
pub fn read_runs(inputs: &[(PathBuf, Run)], mut f: impl FnMut(String) -> io::Result<()>) -> io::Result<()> {
    for (path, run) in inputs {
        let mut r = RunReader::open(path, *run)?;
        while let Some(l) = r.next()? {
            f(l)?;
        }
    }
    Ok(())
}
