//! The two transports: newline-delimited JSON over byte streams, and text
//! frames over a websocket.

use std::io::{BufRead, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use tungstenite::{Message, WebSocket};

use crate::session::{
    run_session, ModelSet, SessionDefaults, SessionEnd, Transport, TransportError,
};

pub struct LineTransport<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> LineTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineTransport { reader, writer }
    }

    pub fn into_writer(self) -> W {
        self.writer
    }
}

impl<R: BufRead, W: Write> Transport for LineTransport<R, W> {
    fn recv(&mut self) -> Result<Option<String>, TransportError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        Ok(Some(line.trim_end_matches(['\r', '\n']).to_string()))
    }

    fn send(&mut self, payload: &str) -> Result<(), TransportError> {
        self.writer.write_all(payload.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

pub struct WsTransport {
    socket: WebSocket<TcpStream>,
}

impl WsTransport {
    pub fn accept(stream: TcpStream) -> Result<Self, TransportError> {
        let socket = tungstenite::accept(stream).map_err(|e| match e {
            tungstenite::HandshakeError::Failure(e) => e.into(),
            tungstenite::HandshakeError::Interrupted(_) => {
                TransportError::Io(std::io::Error::other("handshake interrupted"))
            }
        })?;
        Ok(WsTransport { socket })
    }
}

impl Transport for WsTransport {
    fn recv(&mut self) -> Result<Option<String>, TransportError> {
        loop {
            match self.socket.read() {
                Ok(Message::Text(text)) => return Ok(Some(text)),
                Ok(Message::Binary(bytes)) => {
                    return Ok(Some(String::from_utf8_lossy(&bytes).into_owned()))
                }
                Ok(Message::Close(_)) => return Ok(None),
                Ok(_) => continue,
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    return Ok(None)
                }
                Err(tungstenite::Error::Protocol(
                    tungstenite::error::ProtocolError::ResetWithoutClosingHandshake,
                )) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn send(&mut self, payload: &str) -> Result<(), TransportError> {
        self.socket.send(Message::Text(payload.to_string()))?;
        Ok(())
    }
}

impl Drop for WsTransport {
    fn drop(&mut self) {
        let _ = self.socket.close(None);
        let _ = self.socket.flush();
    }
}

/// Accepts connections forever, one session thread per connection.
pub fn serve_websocket(
    listener: TcpListener,
    models: Arc<ModelSet>,
    defaults: SessionDefaults,
) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let models = Arc::clone(&models);
        thread::spawn(move || {
            let peer = stream
                .peer_addr()
                .map(|a| a.to_string())
                .unwrap_or_else(|_| "unknown peer".into());
            log::info!("session opened: {peer}");
            let outcome = WsTransport::accept(stream)
                .and_then(|mut t| run_session(&mut t, &models, defaults));
            match outcome {
                Ok(SessionEnd::Disconnected) => log::info!("session closed: {peer}"),
                Ok(SessionEnd::Aborted) => log::info!("session aborted: {peer}"),
                Err(e) => log::warn!("session {peer} failed: {e}"),
            }
        });
    }
    Ok(())
}
