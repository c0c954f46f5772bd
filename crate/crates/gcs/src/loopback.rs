use std::io;
use std::sync::mpsc;
use std::sync::Arc;

use watercare_core::protocol::StreamDecoder;
use watercare_core::Link;

use crate::service::Gcs;

/// In-process transport: bytes sent are decoded and ingested on the
/// caller's thread; frames the service addresses to the bot queue up for
/// the next [`Link::poll`].
pub struct LoopbackLink {
    gcs: Arc<Gcs>,
    decoder: StreamDecoder,
    inbox: Option<mpsc::Receiver<Vec<u8>>>,
    attachment: Option<u64>,
}

impl LoopbackLink {
    /// Link for the bot; the service routes missions and commands to it.
    pub fn bot(gcs: Arc<Gcs>) -> Self {
        let (tx, rx) = mpsc::channel::<Vec<u8>>();
        let id = gcs.attach_bot(Arc::new(move |frame: &[u8]| tx.send(frame.to_vec()).is_ok()));
        Self {
            gcs,
            decoder: StreamDecoder::new(),
            inbox: Some(rx),
            attachment: Some(id),
        }
    }

    /// Send-only link, e.g. for a fence camera.
    pub fn source(gcs: Arc<Gcs>) -> Self {
        Self {
            gcs,
            decoder: StreamDecoder::new(),
            inbox: None,
            attachment: None,
        }
    }
}

impl Link for LoopbackLink {
    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        let decoded = self.decoder.feed(frame);
        for err in &decoded.errors {
            self.gcs.note_decode_error(err);
        }
        for packet in &decoded.packets {
            self.gcs.ingest(packet);
        }
        Ok(())
    }

    fn poll(&mut self, out: &mut Vec<u8>) -> io::Result<()> {
        if let Some(rx) = &self.inbox {
            while let Ok(frame) = rx.try_recv() {
                out.extend_from_slice(&frame);
            }
        }
        Ok(())
    }
}

impl Drop for LoopbackLink {
    fn drop(&mut self) {
        if let Some(id) = self.attachment {
            self.gcs.detach_bot(id);
        }
    }
}
