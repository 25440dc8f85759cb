//! Compact columnar binary store for recoded line records.
//!
//! Layout: magic `HFRS`, u16 format version, then blocks. Each block is a
//! u32 row count followed by one column per field: event date as i32 days
//! since 1970-01-01, then u8 age band index, gender, hospitalized, died, and
//! two state bytes (zero when absent). A zero row count ends the stream.
//! All integers are little-endian.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::record::{AgeBand, Gender, LineRecord, StateCode};

pub const MAGIC: &[u8; 4] = b"HFRS";
pub const FORMAT_VERSION: u16 = 1;
pub const DEFAULT_BLOCK_ROWS: usize = 1 << 16;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch")
}

fn gender_code(g: Gender) -> u8 {
    match g {
        Gender::Female => 0,
        Gender::Male => 1,
        Gender::OtherUnknown => 2,
    }
}

fn gender_from(code: u8) -> Result<Gender> {
    match code {
        0 => Ok(Gender::Female),
        1 => Ok(Gender::Male),
        2 => Ok(Gender::OtherUnknown),
        c => Err(Error::Store(format!("bad gender code {c}"))),
    }
}

fn flag(code: u8) -> Result<bool> {
    match code {
        0 => Ok(false),
        1 => Ok(true),
        c => Err(Error::Store(format!("bad outcome code {c}"))),
    }
}

/// Buffers records and flushes them in fixed-size blocks.
pub struct StoreWriter<W: Write> {
    out: W,
    block_rows: usize,
    pending: Vec<LineRecord>,
    written: u64,
}

impl<W: Write> StoreWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        Self::with_block_rows(out, DEFAULT_BLOCK_ROWS)
    }

    pub fn with_block_rows(mut out: W, block_rows: usize) -> Result<Self> {
        if block_rows == 0 || block_rows > u32::MAX as usize {
            return Err(Error::InvalidArgument("block_rows must be in 1..=u32::MAX".into()));
        }
        out.write_all(MAGIC)?;
        out.write_u16::<LittleEndian>(FORMAT_VERSION)?;
        Ok(StoreWriter { out, block_rows, pending: Vec::with_capacity(block_rows), written: 0 })
    }

    pub fn push(&mut self, record: &LineRecord) -> Result<()> {
        self.pending.push(*record);
        if self.pending.len() == self.block_rows {
            self.flush_block()?;
        }
        Ok(())
    }

    fn flush_block(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let o = &mut self.out;
        o.write_u32::<LittleEndian>(self.pending.len() as u32)?;
        for r in &self.pending {
            let days = (r.event_date - epoch()).num_days();
            let days = i32::try_from(days).map_err(|_| Error::Store(format!("date {} out of range", r.event_date)))?;
            o.write_i32::<LittleEndian>(days)?;
        }
        for r in &self.pending {
            o.write_u8(r.age_band.index() as u8)?;
        }
        for r in &self.pending {
            o.write_u8(gender_code(r.gender))?;
        }
        for r in &self.pending {
            o.write_u8(r.hospitalized as u8)?;
        }
        for r in &self.pending {
            o.write_u8(r.died as u8)?;
        }
        for r in &self.pending {
            o.write_all(&r.state.map(|s| s.as_bytes()).unwrap_or([0, 0]))?;
        }
        self.written += self.pending.len() as u64;
        self.pending.clear();
        Ok(())
    }

    /// Flush, write the terminator, and return the sink and row count.
    pub fn finish(mut self) -> Result<(W, u64)> {
        self.flush_block()?;
        self.out.write_u32::<LittleEndian>(0)?;
        self.out.flush()?;
        Ok((self.out, self.written))
    }
}

/// Streams records back block by block.
pub struct StoreReader<R: Read> {
    input: R,
    block: std::vec::IntoIter<LineRecord>,
    done: bool,
}

impl<R: Read> StoreReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Store("not a record store (bad magic)".into()));
        }
        let version = input.read_u16::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Store(format!("unsupported store version {version}")));
        }
        Ok(StoreReader { input, block: Vec::new().into_iter(), done: false })
    }

    fn read_block(&mut self) -> Result<bool> {
        let rows = self.input.read_u32::<LittleEndian>()? as usize;
        if rows == 0 {
            return Ok(false);
        }
        let inp = &mut self.input;
        let mut dates = vec![0i32; rows];
        inp.read_i32_into::<LittleEndian>(&mut dates)?;
        let mut cols = vec![vec![0u8; rows]; 4];
        for c in cols.iter_mut() {
            inp.read_exact(c)?;
        }
        let mut states = vec![0u8; rows * 2];
        inp.read_exact(&mut states)?;
        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let event_date = epoch()
                .checked_add_signed(chrono::Duration::days(dates[i] as i64))
                .ok_or_else(|| Error::Store(format!("date offset {} out of range", dates[i])))?;
            let age_band = AgeBand::from_index(cols[0][i] as usize)
                .ok_or_else(|| Error::Store(format!("bad age band code {}", cols[0][i])))?;
            let st = [states[2 * i], states[2 * i + 1]];
            let state = if st == [0, 0] {
                None
            } else {
                Some(StateCode::from_bytes(st).ok_or_else(|| Error::Store("bad state code".into()))?)
            };
            out.push(LineRecord {
                event_date,
                age_band,
                gender: gender_from(cols[1][i])?,
                hospitalized: flag(cols[2][i])?,
                died: flag(cols[3][i])?,
                state,
            });
        }
        self.block = out.into_iter();
        Ok(true)
    }
}

impl<R: Read> Iterator for StoreReader<R> {
    type Item = Result<LineRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.block.next() {
                return Some(Ok(r));
            }
            if self.done {
                return None;
            }
            match self.read_block() {
                Ok(true) => {}
                Ok(false) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

pub fn write_store<W: Write>(records: &[LineRecord], out: W) -> Result<u64> {
    let mut w = StoreWriter::new(out)?;
    for r in records {
        w.push(r)?;
    }
    Ok(w.finish()?.1)
}

pub fn read_store<R: Read>(input: R) -> Result<Vec<LineRecord>> {
    StoreReader::new(input)?.collect()
}
