"""Time and size units. Simulated time is integer nanoseconds everywhere."""

NS = 1
US = 1_000
MS = 1_000_000
SEC = 1_000_000_000

KB = 1024
MB = 1024 * 1024
GB = 1024 * 1024 * 1024

PAGE_4K = 4 * KB
PAGE_2M = 2 * MB

PAGE_SIZES = {"4k": PAGE_4K, "2m": PAGE_2M}


def parse_page_size(value):
    """Accept '4k'/'2m' or a raw byte count."""
    if isinstance(value, str):
        key = value.lower()
        if key not in PAGE_SIZES:
            raise ValueError(f"unknown page size {value!r} (expected '4k' or '2m')")
        return PAGE_SIZES[key]
    size = int(value)
    if size not in PAGE_SIZES.values():
        raise ValueError(f"unsupported page size {size}")
    return size


def page_size_name(size):
    return "4k" if size == PAGE_4K else "2m"
