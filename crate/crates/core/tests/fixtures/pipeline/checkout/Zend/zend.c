#include "zend.h"
#include "zend_extensions.h"
#include "zend_fibers.h"
#include "zend_ini.h"

static ZEND_INI_MH(OnUpdateErrorReporting)
{
    EG(error_reporting) = zend_ini_parse_quantity_warn(new_value, name);
    return SUCCESS;
}

static ZEND_INI_MH(OnUpdateFiberStackSize)
{
    if (new_value) {
        zend_long tmp = zend_ini_parse_quantity_warn(new_value, name);
        if (tmp < 0) {
            return FAILURE;
        }
        EG(fiber_stack_size) = tmp;
    } else {
        EG(fiber_stack_size) = ZEND_FIBER_DEFAULT_C_STACK_SIZE;
    }
    return SUCCESS;
}

static size_t zend_fiber_page_size(void)
{
    static size_t page_size = 0;
    if (!page_size) {
        page_size = zend_get_page_size();
    }
    return page_size;
}

ZEND_API size_t zend_fiber_stack_bytes(void)
{
    size_t page = zend_fiber_page_size();
    size_t size = (EG(fiber_stack_size) + page - 1) / page * page;
    return size + ZEND_FIBER_GUARD_PAGES * page;
}
