//! TCP transport, a thread-per-connection server loop and a client driver.

use std::io::{BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use crate::protocol::{
    ClientOutcome, ClientSession, Direction, ProtocolError, RecordingTransport, ServerConfig,
    ServerSession, SessionReport, Transcript, Transport,
};
use crate::quantizer::QuantizedModel;
use crate::wire::{encode_frame, read_frame_bytes, WireError};

fn io_error(e: std::io::Error) -> ProtocolError {
    WireError::Io(e.to_string()).into()
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    max_frame: usize,
}

impl TcpTransport {
    pub fn new(stream: TcpStream, max_frame: usize) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        Ok(TcpTransport {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            max_frame,
        })
    }
}

impl Transport for TcpTransport {
    fn send_bytes(&mut self, frame: &[u8]) -> Result<(), ProtocolError> {
        self.writer.write_all(frame).map_err(io_error)
    }

    fn recv_bytes(&mut self) -> Result<Vec<u8>, ProtocolError> {
        Ok(read_frame_bytes(&mut self.reader, self.max_frame)?)
    }
}

/// Serve one connection to completion, recording the server-side transcript.
pub fn serve_connection(
    stream: TcpStream,
    model: Arc<QuantizedModel>,
    config: ServerConfig,
) -> (Result<SessionReport, ProtocolError>, Transcript) {
    let transport = match TcpTransport::new(stream, config.max_frame) {
        Ok(t) => t,
        Err(e) => return (Err(io_error(e)), Vec::new()),
    };
    let mut t = RecordingTransport::new(transport);
    let result = ServerSession::new(model, config).run(&mut t);
    (result, t.into_parts().1)
}

/// Accept connections and run each session on its own thread. Connection
/// `k` (counting from 0) seeds its session with `seed + k`. Stops after
/// `limit` connections when given; otherwise runs until accept fails.
pub fn serve<F>(
    listener: &TcpListener,
    model: Arc<QuantizedModel>,
    config: ServerConfig,
    limit: Option<usize>,
    on_done: F,
) -> std::io::Result<()>
where
    F: Fn(usize, Result<SessionReport, ProtocolError>) + Send + Sync + 'static,
{
    let on_done = Arc::new(on_done);
    let mut handles = Vec::new();
    for (k, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let model = Arc::clone(&model);
        let on_done = Arc::clone(&on_done);
        let mut cfg = config;
        cfg.seed = config.seed.map(|s| s.wrapping_add(k as u64));
        handles.push(thread::spawn(move || {
            let (result, _) = serve_connection(stream, model, cfg);
            on_done(k, result);
        }));
        if limit.is_some_and(|l| k + 1 >= l) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

/// Drive a client session over an established stream. The transcript is
/// recorded with directions as seen by the server.
pub fn run_client(
    stream: TcpStream,
    mut client: ClientSession,
    max_frame: usize,
) -> (Result<ClientOutcome, ProtocolError>, Transcript) {
    let mut transcript = Vec::new();
    let result = drive(stream, &mut client, max_frame, &mut transcript);
    (result, transcript)
}

fn drive(
    stream: TcpStream,
    client: &mut ClientSession,
    max_frame: usize,
    transcript: &mut Transcript,
) -> Result<ClientOutcome, ProtocolError> {
    let mut t = TcpTransport::new(stream, max_frame).map_err(io_error)?;
    let mut outgoing = client.start()?;
    loop {
        for f in outgoing.drain(..) {
            let bytes = encode_frame(&f);
            t.send_bytes(&bytes)?;
            transcript.push((Direction::ClientToServer, bytes));
        }
        if let Some(o) = client.outcome() {
            return Ok(o.clone());
        }
        let bytes = t.recv_bytes()?;
        transcript.push((Direction::ServerToClient, bytes.clone()));
        match client.handle_bytes(&bytes) {
            Ok(replies) => outgoing = replies,
            Err(e) => {
                if !matches!(e, ProtocolError::Remote { .. }) {
                    let _ = t.send_bytes(&encode_frame(&client.error_frame(&e)));
                }
                return Err(e);
            }
        }
    }
}

/// Connect to a server and classify with the given client session.
pub fn classify_remote<A: ToSocketAddrs>(
    addr: A,
    client: ClientSession,
    max_frame: usize,
) -> Result<ClientOutcome, ProtocolError> {
    let stream = TcpStream::connect(addr).map_err(io_error)?;
    run_client(stream, client, max_frame).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageVector;
    use crate::paillier::keygen;
    use crate::par::Exec;
    use crate::protocol::{run_session_recorded, ClientConfig};
    use crate::quantizer::QuantizedEntry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn model() -> QuantizedModel {
        let mut q = QuantizedModel {
            scale: 1,
            q_projection: vec![vec![1, -1, 0], vec![0, 1, 1]],
            q_mean: vec![100, 100, 100],
            q_gallery: [(vec![0, 0], 0), (vec![40, 20], 1), (vec![-30, -50], 2), (vec![5, 5], 1)]
                .into_iter()
                .map(|(features, label)| QuantizedEntry { features, label })
                .collect(),
            l: 0,
            label_names: vec!["a".into(), "b".into(), "c".into()],
            gallery_images: vec![],
        };
        q.l = crate::quantizer::distance_bitbound(&q).unwrap();
        q
    }

    fn configs() -> (ClientConfig, ServerConfig) {
        let client = ClientConfig {
            seed: Some(77),
            exec: Exec::Sequential,
            ..ClientConfig::default()
        };
        let server = ServerConfig {
            seed: Some(78),
            exec: Exec::Sequential,
            ..ServerConfig::default()
        };
        (client, server)
    }

    #[test]
    fn tcp_transcript_matches_loopback() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, sk) = keygen(256, &mut rng).unwrap();
        let q = Arc::new(model());
        let image = ImageVector::new(vec![140, 115, 90]);
        let (ccfg, scfg) = configs();

        let client = ClientSession::new(sk.clone(), image.clone(), ccfg);
        let server = ServerSession::new(Arc::clone(&q), scfg);
        let (loop_result, loop_transcript) = run_session_recorded(client, server);
        let (_, loop_outcome) = loop_result.unwrap();

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let qs = Arc::clone(&q);
        let server = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            serve_connection(stream, qs, scfg)
        });
        let stream = TcpStream::connect(addr).unwrap();
        let (outcome, client_transcript) =
            run_client(stream, ClientSession::new(sk, image, ccfg), ccfg.max_frame);
        let (report, server_transcript) = server.join().unwrap();
        report.unwrap();

        assert_eq!(outcome.unwrap(), loop_outcome);
        assert_eq!(server_transcript, loop_transcript);
        assert_eq!(client_transcript, loop_transcript);
    }

    #[test]
    fn serve_handles_concurrent_clients() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (_, sk) = keygen(256, &mut rng).unwrap();
        let q = Arc::new(model());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (ccfg, scfg) = configs();
        let qs = Arc::clone(&q);
        let server = thread::spawn(move || {
            serve(&listener, qs, scfg, Some(3), |_, r| {
                r.unwrap();
            })
        });
        let images = [vec![100, 100, 100], vec![150, 110, 90], vec![60, 100, 60]];
        let clients: Vec<_> = images
            .iter()
            .map(|px| {
                let sk = sk.clone();
                let image = ImageVector::new(px.clone());
                thread::spawn(move || {
                    classify_remote(addr, ClientSession::new(sk, image, ccfg), ccfg.max_frame)
                })
            })
            .collect();
        for (px, h) in images.iter().zip(clients) {
            let expected = q.classify(&ImageVector::new(px.clone())).unwrap().label;
            assert_eq!(h.join().unwrap().unwrap().label_code, expected);
        }
        server.join().unwrap().unwrap();
    }

    #[test]
    fn garbage_from_client_gets_a_typed_abort() {
        let q = Arc::new(model());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (_, scfg) = configs();
        let server = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            serve_connection(stream, q, scfg).0
        });
        let mut stream = TcpStream::connect(addr).unwrap();
        stream.write_all(&[0, 0, 0, 2, 0x55, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9]).unwrap();
        let err = server.join().unwrap().unwrap_err();
        assert!(matches!(err, ProtocolError::Wire(WireError::UnknownType(0x55))), "{err}");
        let mut reader = BufReader::new(stream);
        let reply = read_frame_bytes(&mut reader, 1 << 20).unwrap();
        let frame = crate::wire::decode_frame(&reply).unwrap();
        assert!(matches!(frame.message, crate::wire::Message::Error { code: 5, .. }));
    }
}
