use std::io::{self, Read, Write};

use super::{decode_frame, encode, DecodeError, TelemetryMessage, MAGIC};

/// Incremental decoder for a byte stream that may carry corrupted frames.
///
/// After any error other than truncation the buffer drops the bad magic and
/// scans forward to the next `D4 47`.
#[derive(Debug, Default)]
pub struct FrameBuffer {
    buf: Vec<u8>,
    discarded: usize,
}

impl FrameBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Bytes thrown away while resynchronizing.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Next complete frame, or `None` when more bytes are needed. Each
    /// `Some(Err(_))` corresponds to one skipped region.
    pub fn next_frame(&mut self) -> Option<Result<(TelemetryMessage, usize), DecodeError>> {
        if self.buf.is_empty() {
            return None;
        }
        match decode_frame(&self.buf) {
            Ok((msg, used)) => {
                self.buf.drain(..used);
                Some(Ok((msg, used)))
            }
            Err(DecodeError::Truncated { .. }) if self.buf.len() < 2 || self.buf[..2] == MAGIC => None,
            Err(e) => {
                self.resync();
                Some(Err(e))
            }
        }
    }

    fn resync(&mut self) {
        let skip = self.buf[1..]
            .windows(2)
            .position(|w| w == MAGIC)
            .map(|p| p + 1)
            .unwrap_or(if self.buf.last() == Some(&MAGIC[0]) { self.buf.len() - 1 } else { self.buf.len() });
        self.discarded += skip;
        self.buf.drain(..skip);
    }
}

/// Reads frames from an ordered byte stream.
pub struct FrameReader<R> {
    inner: R,
    buf: FrameBuffer,
    bytes_read: u64,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: FrameBuffer::new(),
            bytes_read: 0,
        }
    }

    /// Blocks until a frame or a decode error is available. `Ok(None)` at end
    /// of stream; a partial trailing frame is reported as truncation.
    pub fn next_frame(&mut self) -> io::Result<Option<Result<TelemetryMessage, DecodeError>>> {
        let mut chunk = [0u8; 4096];
        loop {
            if let Some(r) = self.buf.next_frame() {
                return Ok(Some(r.map(|(m, _)| m)));
            }
            let n = match self.inner.read(&mut chunk) {
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            if n == 0 {
                let left = self.buf.pending();
                if left == 0 {
                    return Ok(None);
                }
                self.buf = FrameBuffer::new();
                return Ok(Some(Err(DecodeError::Truncated {
                    needed: left + 1,
                    available: left,
                })));
            }
            self.bytes_read += n as u64;
            self.buf.push(&chunk[..n]);
        }
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }

    pub fn get_ref(&self) -> &R {
        &self.inner
    }
}

/// Writes whole frames; each message is one `write_all` followed by a flush.
pub struct FrameWriter<W> {
    inner: W,
    bytes_written: u64,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner,
            bytes_written: 0,
        }
    }

    /// Returns the frame size.
    pub fn send(&mut self, msg: &TelemetryMessage) -> io::Result<usize> {
        let bytes = encode(msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        self.inner.write_all(&bytes)?;
        self.inner.flush()?;
        self.bytes_written += bytes.len() as u64;
        Ok(bytes.len())
    }

    pub fn bytes_written(&self) -> u64 {
        self.bytes_written
    }

    pub fn get_ref(&self) -> &W {
        &self.inner
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}
