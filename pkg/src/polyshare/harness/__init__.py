from polyshare.harness.session import (
    LogEntry,
    MalformedMessageError,
    PartyId,
    RoleMetrics,
    RunMetrics,
    Session,
    SessionError,
    collect_metrics,
    open_session,
)
from polyshare.harness.transport import ChannelError, FramedStreamTransport, InMemoryTransport
from polyshare.harness.wire import COLLECTOR, DISTRIBUTOR, ZERO_FLAG, FrameError, Message

__all__ = [
    "COLLECTOR", "DISTRIBUTOR", "ZERO_FLAG", "ChannelError", "FrameError", "FramedStreamTransport", "InMemoryTransport",
    "LogEntry", "MalformedMessageError", "Message", "PartyId", "RoleMetrics", "RunMetrics", "Session",
    "SessionError", "collect_metrics", "open_session",
]
