from .audit import audit_log
from .centralized import CentralizedModel
from .federation import FedConfig, Federation
from .messages import (
    MESSAGE_TYPES,
    NO_TIMESTAMP,
    WIRE_VERSION,
    AggregatedEmbedding,
    EmbeddingRequest,
    LocalEmbedding,
    LocalGradient,
    UserGradient,
    WireError,
    decode,
    encode,
)
from .parties import FAILURE_POLICIES, AdPlatform, BehaviorPlatform, UserServer, request_id
from .tapecache import TapeCache
from .transport import (
    AD_PLATFORM,
    USER_SERVER,
    InProcessTransport,
    LogEntry,
    PartyId,
    PartyUnavailable,
    ProtocolError,
    Receipt,
    RecordingTransport,
    platform_id,
)
