//! Websocket transport for [`SessionState`].
//!
//! One thread owns the session and runs the fixed-cadence loop; each
//! connection gets a reader/writer thread that talks to it over channels.
//! Messages from one connection are applied in arrival order, and frames
//! are broadcast in frame-id order.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::session::{ClientId, Outgoing, SessionState};

/// How long a connection thread blocks on a read before flushing output.
const POLL: Duration = Duration::from_millis(5);

enum Event {
    Connected(ClientId, Sender<Outgoing>),
    Text(ClientId, String),
    Disconnected(ClientId),
}

pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind(addr: &str) -> io::Result<Server> {
        Ok(Server { listener: TcpListener::bind(addr)? })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `stop` is set. `frame_interval` is the loop cadence.
    pub fn run(self, mut state: SessionState, frame_interval: Duration, stop: Arc<AtomicBool>) -> io::Result<()> {
        let (events_tx, events_rx) = mpsc::channel::<Event>();
        self.listener.set_nonblocking(true)?;
        let accept_stop = stop.clone();
        let listener = self.listener;
        let acceptor = thread::spawn(move || {
            let mut next_id: ClientId = 1;
            while !accept_stop.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let id = next_id;
                        next_id += 1;
                        let tx = events_tx.clone();
                        let stop = accept_stop.clone();
                        thread::spawn(move || connection(id, stream, tx, stop));
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
                    Err(e) => eprintln!("error: accept failed: {e}"),
                }
            }
        });
        let result = session_loop(&mut state, events_rx, frame_interval, &stop);
        stop.store(true, Ordering::Relaxed);
        let _ = acceptor.join();
        result
    }
}

fn session_loop(state: &mut SessionState, events: Receiver<Event>, interval: Duration, stop: &AtomicBool) -> io::Result<()> {
    let mut clients: Vec<(ClientId, Sender<Outgoing>)> = Vec::new();
    let mut next_tick = Instant::now();
    while !stop.load(Ordering::Relaxed) {
        let wait = next_tick.saturating_duration_since(Instant::now());
        match events.recv_timeout(wait) {
            Ok(Event::Connected(id, tx)) => {
                let _ = tx.send(Outgoing::Text(state.mesh_message().to_json()));
                clients.push((id, tx));
            }
            Ok(Event::Text(id, text)) => {
                let replies = state.handle_text(id, &text);
                if let Some((_, tx)) = clients.iter().find(|(c, _)| *c == id) {
                    for r in replies {
                        let _ = tx.send(r);
                    }
                }
            }
            Ok(Event::Disconnected(id)) => {
                state.release_client(id);
                clients.retain(|(c, _)| *c != id);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => {
                // Acceptor gone: keep ticking until stopped.
                thread::sleep(wait);
            }
        }
        if Instant::now() >= next_tick {
            next_tick += interval;
            if clients.is_empty() && state.paused {
                continue;
            }
            match state.tick() {
                Ok(Some(frame)) => {
                    let bytes = frame.encode();
                    clients.retain(|(_, tx)| tx.send(Outgoing::Binary(bytes.clone())).is_ok());
                }
                Ok(None) => {}
                Err(e) => {
                    for (_, tx) in &clients {
                        let _ = tx.send(Outgoing::Text(crate::session::ServerMessage::Error { msg: e.to_string() }.to_json()));
                    }
                    state.paused = true;
                }
            }
        }
    }
    Ok(())
}

fn connection(id: ClientId, stream: TcpStream, events: Sender<Event>, stop: Arc<AtomicBool>) {
    let _ = stream.set_nonblocking(false);
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let _ = ws.get_ref().set_read_timeout(Some(POLL));
    let (tx, rx) = mpsc::channel();
    if events.send(Event::Connected(id, tx)).is_err() {
        return;
    }
    let _ = pump(id, &mut ws, &events, &rx, &stop);
    let _ = events.send(Event::Disconnected(id));
}

fn pump(id: ClientId, ws: &mut WebSocket<TcpStream>, events: &Sender<Event>, out: &Receiver<Outgoing>, stop: &AtomicBool) -> tungstenite::Result<()> {
    while !stop.load(Ordering::Relaxed) {
        while let Ok(msg) = out.try_recv() {
            ws.write(match msg {
                Outgoing::Text(t) => Message::text(t),
                Outgoing::Binary(b) => Message::binary(b),
            })?;
        }
        ws.flush()?;
        match ws.read() {
            Ok(Message::Text(t)) => {
                if events.send(Event::Text(id, t.to_string())).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
    let _ = ws.close(None);
    Ok(())
}
