use std::collections::VecDeque;

use super::{ClientOutcome, ClientSession, ProtocolError, ServerSession, SessionReport};
use crate::wire::{encode_frame, WireError};

/// A bidirectional stream of encoded frames, seen from the server.
pub trait Transport {
    fn send_bytes(&mut self, frame: &[u8]) -> Result<(), ProtocolError>;
    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send_bytes(&mut self, frame: &[u8]) -> Result<(), ProtocolError> {
        (**self).send_bytes(frame)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        (**self).recv_bytes()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ServerToClient,
    ClientToServer,
}

pub type Transcript = Vec<(Direction, Vec<u8>)>;

/// Records every frame passing through the inner transport.
pub struct RecordingTransport<T> {
    inner: T,
    transcript: Transcript,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            transcript: Vec::new(),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_parts(self) -> (T, Transcript) {
        (self.inner, self.transcript)
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send_bytes(&mut self, frame: &[u8]) -> Result<(), ProtocolError> {
        self.transcript.push((Direction::ServerToClient, frame.to_vec()));
        self.inner.send_bytes(frame)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        let frame = self.inner.recv_bytes()?;
        self.transcript.push((Direction::ClientToServer, frame.clone()));
        Ok(frame)
    }
}

/// In-process transport that hands each server frame to a client state
/// machine and queues its replies.
pub struct LoopbackTransport {
    client: ClientSession,
    inbox: VecDeque<Vec<u8>>,
    client_error: Option<ProtocolError>,
}

impl LoopbackTransport {
    pub fn new(mut client: ClientSession) -> Result<Self, ProtocolError> {
        let inbox = client.start()?.iter().map(encode_frame).collect();
        Ok(LoopbackTransport {
            client,
            inbox,
            client_error: None,
        })
    }

    /// Connect to a client that was started elsewhere.
    pub fn attach(client: ClientSession) -> Self {
        LoopbackTransport {
            client,
            inbox: VecDeque::new(),
            client_error: None,
        }
    }

    pub fn client(&self) -> &ClientSession {
        &self.client
    }

    pub fn client_error(&self) -> Option<&ProtocolError> {
        self.client_error.as_ref()
    }

    pub fn into_client(self) -> (ClientSession, Option<ProtocolError>) {
        (self.client, self.client_error)
    }
}

impl Transport for LoopbackTransport {
    fn send_bytes(&mut self, frame: &[u8]) -> Result<(), ProtocolError> {
        if self.client.is_finished() {
            return Err(WireError::Closed.into());
        }
        match self.client.handle_bytes(frame) {
            Ok(replies) => self.inbox.extend(replies.iter().map(encode_frame)),
            Err(e) => {
                if !matches!(e, ProtocolError::Remote { .. }) {
                    self.inbox.push_back(encode_frame(&self.client.error_frame(&e)));
                }
                self.client_error = Some(e);
            }
        }
        Ok(())
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        self.inbox.pop_front().ok_or(WireError::Closed.into())
    }
}

/// Run one session in-process. Returns the server report and the label the
/// client decrypted.
pub fn run_session(
    client: ClientSession,
    server: ServerSession,
) -> Result<(SessionReport, ClientOutcome), ProtocolError> {
    run_session_recorded(client, server).0
}

/// [`run_session`] that also returns every frame exchanged.
pub fn run_session_recorded(
    client: ClientSession,
    server: ServerSession,
) -> (Result<(SessionReport, ClientOutcome), ProtocolError>, Transcript) {
    let loopback = match LoopbackTransport::new(client) {
        Ok(t) => t,
        Err(e) => return (Err(e), Vec::new()),
    };
    let mut t = RecordingTransport::new(loopback);
    let report = server.run(&mut t);
    let (loopback, transcript) = t.into_parts();
    let (client, client_error) = loopback.into_client();
    let result = match (report, client_error) {
        (_, Some(e)) | (Err(e), None) => Err(e),
        (Ok(report), None) => client
            .outcome()
            .cloned()
            .map(|o| (report, o))
            .ok_or(ProtocolError::Finished),
    };
    (result, transcript)
}
