# Tests package marker