# Source package marker