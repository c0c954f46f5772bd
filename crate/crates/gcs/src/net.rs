//! Protocol listener: every TCP connection is a byte stream of frames.
//! The connection that carries bot frames becomes the route to the bot.

use std::io;
use std::sync::Arc;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinSet;
use watercare_core::protocol::{StreamDecoder, SYS_BOT};

use crate::service::Gcs;

pub async fn serve_protocol(listener: TcpListener, gcs: Arc<Gcs>) -> io::Result<()> {
    // dropping this future aborts every connection task
    let mut connections = JoinSet::new();
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                tracing::info!(%peer, "protocol connection");
                connections.spawn(connection(stream, gcs.clone()));
            }
            Some(_) = connections.join_next(), if !connections.is_empty() => {}
        }
    }
}

async fn connection(stream: TcpStream, gcs: Arc<Gcs>) {
    let _ = stream.set_nodelay(true);
    let (mut reader, mut writer) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
    let writer_task = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            if writer.write_all(&frame).await.is_err() {
                break;
            }
        }
    });

    let mut decoder = StreamDecoder::new();
    let mut attachment = None;
    let mut buf = vec![0u8; 4096];
    loop {
        let n = match reader.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        let decoded = decoder.feed(&buf[..n]);
        for err in &decoded.errors {
            gcs.note_decode_error(err);
        }
        for packet in &decoded.packets {
            if attachment.is_none() && packet.header.sys_id == SYS_BOT {
                let tx = tx.clone();
                attachment = Some(gcs.attach_bot(Arc::new(move |f: &[u8]| tx.send(f.to_vec()).is_ok())));
            }
            gcs.ingest(packet);
        }
    }
    if let Some(id) = attachment {
        gcs.detach_bot(id);
    }
    drop(tx);
    let _ = writer_task.await;
}
