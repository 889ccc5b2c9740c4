#include "zend.h"
#include "zend_ini.h"

static zend_ulong zend_ini_parse_quantity_internal(const char *digits, size_t len, zend_long *factor_out)
{
    zend_ulong retval = 0;
    size_t i = 0;
    while (i < len && digits[i] >= '0' && digits[i] <= '9') {
        zend_long digit = digits[i] - '0';
        retval = retval * 10 + digit;
        i++;
    }
    if (i < len) {
        *factor_out = zend_ini_factor(digits[i]);
    }
    return retval;
}

ZEND_API zend_long zend_ini_parse_quantity_warn(zend_string *value, zend_string *setting)
{
    zend_long factor = 1;
    zend_ulong base = zend_ini_parse_quantity_internal(ZSTR_VAL(value), ZSTR_LEN(value), &factor);
    return (zend_long) (base * factor);
}
