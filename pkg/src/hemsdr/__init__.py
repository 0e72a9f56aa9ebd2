"""Hour-ahead and day-ahead demand response for a home with a battery and PV."""
from hemsdr.core import DayProfile, SlotDispatch, SystemParams

__all__ = ["DayProfile", "SlotDispatch", "SystemParams"]
__version__ = "0.1.0"
