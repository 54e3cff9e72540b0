from .csv_parser import parse_csv, detect_csv_format, format_csv, CSV_FORMATS
from .idx_parser import parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels
from .cifar_parser import parse_cifar
from .image_parser import parse_image_folder

__all__ = [
    'parse_csv', 'detect_csv_format', 'format_csv', 'CSV_FORMATS',
    'parse_idx_images', 'parse_idx_labels', 'write_idx_images', 'write_idx_labels',
    'parse_cifar', 'parse_image_folder',
]
