from .envelope import (BusError, Envelope, EnvelopeTooLarge, FrameDecoder, IntegrityError, NeedMoreData,
                       ProtocolError, decode_envelope, encode_envelope)
from .topics import TopicTable, topic_matches
from .broker import Broker, SessionQueue, broker_route
from .client import BusClient
from .faults import FaultPolicy, FaultyLink, inject_faults
from .logfile import LogContents, LogFormatError, LogWriter, read_log
