"""Playlist title generation from track-ID or artist-ID sequences."""
__version__ = "0.1.0"
