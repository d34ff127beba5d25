use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::args::Format;
use crate::error::CliError;

pub struct Output {
    sink: Box<dyn Write>,
    format: Format,
}

impl Output {
    pub fn open(path: Option<&Path>, format: Format) -> Result<Self, CliError> {
        let sink: Box<dyn Write> = match path {
            Some(p) => {
                Box::new(BufWriter::new(File::create(p).map_err(|e| {
                    CliError::Io(format!("cannot create {}: {e}", p.display()))
                })?))
            }
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        Ok(Output { sink, format })
    }

    pub fn format(&self) -> Format {
        self.format
    }

    /// Rows as CSV with a header, or as JSON lines.
    pub fn rows<T: Serialize>(&mut self, rows: &[T]) -> Result<(), CliError> {
        match self.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(&mut self.sink);
                for r in rows {
                    w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
                }
                w.flush().map_err(io_err)?;
            }
            Format::Json => {
                for r in rows {
                    self.json(r)?;
                }
            }
        }
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.sink, value).map_err(|e| CliError::Io(e.to_string()))?;
        self.line("")
    }

    pub fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.sink, "{text}").map_err(io_err)
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.sink.flush().map_err(io_err)
    }
}

fn io_err(e: io::Error) -> CliError {
    CliError::Io(e.to_string())
}
